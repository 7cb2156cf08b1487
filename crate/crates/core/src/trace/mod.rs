//! Execution traces: parameters, sampled ball/paddle positions and the landing record.
//!
//! Prompts always carry the textual rendering of [`render`]; storage always uses the
//! JSON-lines format of [`store`].

mod cache;
pub mod render;
pub mod store;

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::TraceCache;
pub use render::{parse_trace, parse_traces, render_trace};
pub use store::{cache_load, cache_save};

pub const PARAM_NAMES: [char; 8] = ['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'];

/// Simulation frame: origin at the net centre on the table surface, +y towards the
/// opponent, +x to the robot's right, +z up.
pub const TABLE_HALF_WIDTH: f64 = 0.7625;
pub const TABLE_DEPTH: f64 = 1.37;
pub const TABLE_HEIGHT: f64 = 0.0;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("cache file: {0}")]
    Store(String),
}

impl TraceError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        TraceError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Per-coordinate bounds on attenuation factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self { lo: 0.5, hi: 1.5 }
    }
}

impl ParamBounds {
    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

/// The eight attenuation factors `a..h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub [f64; 8]);

impl ParamVector {
    pub const ONES: ParamVector = ParamVector([1.0; 8]);

    pub fn new(values: [f64; 8]) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64; 8] {
        &self.0
    }

    pub fn index_of(name: char) -> Option<usize> {
        PARAM_NAMES.iter().position(|&c| c == name)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn within(&self, bounds: &ParamBounds) -> bool {
        self.0.iter().all(|&v| bounds.contains(v))
    }

    /// Clamped copy and whether any coordinate moved.
    pub fn clamped(&self, bounds: &ParamBounds) -> (ParamVector, bool) {
        let mut out = *self;
        let mut moved = false;
        for v in &mut out.0 {
            let c = v.clamp(bounds.lo, bounds.hi);
            moved |= c != *v;
            *v = c;
        }
        (out, moved)
    }

    /// Deviation from the neutral attenuation `1`.
    pub fn deviation(&self) -> [f64; 8] {
        self.0.map(|v| v - 1.0)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = PARAM_NAMES
            .iter()
            .zip(self.0)
            .map(|(n, v)| format!("{n}:{}", render::trim_decimal(v, 4)))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: u32,
    pub paddle: [f64; 3],
    pub ball: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub on_table: bool,
    pub peak_height: f64,
}

impl LandingRecord {
    /// Whether `(x, y)` lies on the opponent's half in the simulation frame.
    pub fn inside_table(x: f64, y: f64) -> bool {
        x.abs() <= TABLE_HALF_WIDTH && (0.0..=TABLE_DEPTH).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub id: usize,
    pub params: ParamVector,
    pub rows: Vec<TraceRow>,
    pub landing: LandingRecord,
}

impl ExecutionTrace {
    /// Highest sampled ball height.
    pub fn sampled_peak(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.ball[2])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self, bounds: &ParamBounds) -> Result<(), TraceError> {
        if !self.params.is_finite() {
            return Err(TraceError::Invalid("parameters must be finite".into()));
        }
        if !self.params.within(bounds) {
            return Err(TraceError::Invalid(format!(
                "parameters {} outside [{}, {}]",
                self.params, bounds.lo, bounds.hi
            )));
        }
        if self.rows.is_empty() {
            return Err(TraceError::Invalid("trace has no rows".into()));
        }
        let mut prev = 0;
        for row in &self.rows {
            if row.time <= prev {
                return Err(TraceError::Invalid(format!(
                    "row time {} does not follow {}",
                    row.time, prev
                )));
            }
            prev = row.time;
        }
        let l = &self.landing;
        if l.on_table && (l.z - TABLE_HEIGHT).abs() > 1e-6 {
            return Err(TraceError::Invalid(format!(
                "on-table landing has z = {} (table surface at {TABLE_HEIGHT})",
                l.z
            )));
        }
        if l.peak_height < l.z {
            return Err(TraceError::Invalid(
                "peak height below landing height".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_flags_movement() {
        let p = ParamVector::new([1.0, 1.7, 0.2, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let (c, moved) = p.clamped(&ParamBounds::default());
        assert!(moved);
        assert_eq!(c[1], 1.5);
        assert_eq!(c[2], 0.5);
        let (_, moved) = ParamVector::ONES.clamped(&ParamBounds::default());
        assert!(!moved);
    }

    #[test]
    fn display_trims_zeros() {
        let p = ParamVector::new([1.1, 1.2, 0.7, 1.1, 1.1, 1.1, 1.1, 1.5]);
        assert_eq!(
            p.to_string(),
            "a:1.1 b:1.2 c:0.7 d:1.1 e:1.1 f:1.1 g:1.1 h:1.5"
        );
    }
}
