//! Shifted benchmark objectives.
//!
//! Each function is evaluated at `x - shift`, so its global minimum sits at `shift`
//! with value zero. Sampling bounds default to the conventional Rastrigin box.

use std::f64::consts::{E, PI};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DOMAIN: (f64, f64) = (-5.12, 5.12);
pub const DEFAULT_SHIFT_RANGE: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("dimension mismatch: function has {expected} dims, got a vector of length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid function definition: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionKind {
    Ackley,
    Rastrigin,
    Sphere,
}

impl FunctionKind {
    pub fn name(self) -> &'static str {
        match self {
            FunctionKind::Ackley => "Ackley",
            FunctionKind::Rastrigin => "Rastrigin",
            FunctionKind::Sphere => "Sphere",
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A shifted objective with its sampling box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFunction {
    kind: FunctionKind,
    shift: Vec<f64>,
    domain_lo: f64,
    domain_hi: f64,
}

/// A point together with its function value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub x: Vec<f64>,
    pub f: f64,
}

impl BenchmarkFunction {
    pub fn new(
        kind: FunctionKind,
        shift: Vec<f64>,
        domain_lo: f64,
        domain_hi: f64,
    ) -> Result<Self, BenchError> {
        if shift.is_empty() {
            return Err(BenchError::Invalid("dims must be positive".into()));
        }
        if domain_lo.partial_cmp(&domain_hi) != Some(std::cmp::Ordering::Less)
            || !domain_lo.is_finite()
            || !domain_hi.is_finite()
        {
            return Err(BenchError::Invalid(format!(
                "domain_lo ({domain_lo}) must be below domain_hi ({domain_hi})"
            )));
        }
        if shift.iter().any(|s| !s.is_finite()) {
            return Err(BenchError::Invalid("shift must be finite".into()));
        }
        Ok(Self {
            kind,
            shift,
            domain_lo,
            domain_hi,
        })
    }

    /// Unshifted function on the default domain.
    pub fn centered(kind: FunctionKind, dims: usize) -> Result<Self, BenchError> {
        Self::new(kind, vec![0.0; dims], DEFAULT_DOMAIN.0, DEFAULT_DOMAIN.1)
    }

    /// Function on the default domain with a shift drawn uniformly from
    /// `[-DEFAULT_SHIFT_RANGE, DEFAULT_SHIFT_RANGE]` per coordinate.
    pub fn with_random_shift<R: Rng + ?Sized>(
        kind: FunctionKind,
        dims: usize,
        rng: &mut R,
    ) -> Result<Self, BenchError> {
        let shift = (0..dims)
            .map(|_| rng.random_range(-DEFAULT_SHIFT_RANGE..=DEFAULT_SHIFT_RANGE))
            .collect();
        Self::new(kind, shift, DEFAULT_DOMAIN.0, DEFAULT_DOMAIN.1)
    }

    pub fn kind(&self) -> FunctionKind {
        self.kind
    }

    pub fn dims(&self) -> usize {
        self.shift.len()
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    pub fn span(&self) -> f64 {
        self.domain_hi - self.domain_lo
    }

    /// Short label such as `2D Ackley`.
    pub fn label(&self) -> String {
        format!("{}D {}", self.dims(), self.kind)
    }

    fn check(&self, x: &[f64]) -> Result<(), BenchError> {
        if x.len() != self.dims() {
            return Err(BenchError::DimensionMismatch {
                expected: self.dims(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn centered_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.shift).map(|(xi, si)| xi - si).collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, BenchError> {
        self.check(x)?;
        let z = self.centered_point(x);
        Ok(match self.kind {
            FunctionKind::Ackley => ackley(&z),
            FunctionKind::Rastrigin => rastrigin(&z),
            FunctionKind::Sphere => sphere(&z),
        })
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, BenchError> {
        self.check(x)?;
        let z = self.centered_point(x);
        Ok(match self.kind {
            FunctionKind::Ackley => ackley_grad(&z),
            FunctionKind::Rastrigin => rastrigin_grad(&z),
            FunctionKind::Sphere => z.iter().map(|zi| 2.0 * zi).collect(),
        })
    }

    pub fn eval_point(&self, x: Vec<f64>) -> Result<EvalPoint, BenchError> {
        let f = self.evaluate(&x)?;
        Ok(EvalPoint { x, f })
    }

    /// Uniform sample per coordinate in `[domain_lo, domain_hi]`.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dims())
            .map(|_| rng.random_range(self.domain_lo..=self.domain_hi))
            .collect()
    }

    pub fn clamp_to_domain(&self, x: &mut [f64]) {
        for v in x {
            *v = v.clamp(self.domain_lo, self.domain_hi);
        }
    }
}

fn sphere(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum()
}

fn rastrigin(z: &[f64]) -> f64 {
    10.0 * z.len() as f64
        + z.iter()
            .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
            .sum::<f64>()
}

fn rastrigin_grad(z: &[f64]) -> Vec<f64> {
    z.iter()
        .map(|v| 2.0 * v + 20.0 * PI * (2.0 * PI * v).sin())
        .collect()
}

fn ackley(z: &[f64]) -> f64 {
    let n = z.len() as f64;
    let rms = (sphere(z) / n).sqrt();
    let mean_cos = z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    -20.0 * (-0.2 * rms).exp() - mean_cos.exp() + 20.0 + E
}

fn ackley_grad(z: &[f64]) -> Vec<f64> {
    let n = z.len() as f64;
    let rms = (sphere(z) / n).sqrt();
    let mean_cos = z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    let radial = if rms > 0.0 {
        4.0 * (-0.2 * rms).exp() / (n * rms)
    } else {
        // the radial term is not differentiable at the minimum; use the zero subgradient
        0.0
    };
    let oscill = 2.0 * PI * mean_cos.exp() / n;
    z.iter()
        .map(|v| radial * v + oscill * (2.0 * PI * v).sin())
        .collect()
}
