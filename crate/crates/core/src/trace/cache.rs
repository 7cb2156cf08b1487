use serde::{Deserialize, Serialize};

use super::{ExecutionTrace, ParamBounds, TraceError};

/// Append-only, insertion-ordered store of traces with ids `1..=len`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceCache {
    traces: Vec<ExecutionTrace>,
    #[serde(default)]
    bounds: ParamBounds,
}

impl TraceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_bounds(bounds: ParamBounds) -> Self {
        Self {
            traces: Vec::new(),
            bounds,
        }
    }

    pub fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    /// Validates `trace`, assigns it the next id and stores it.
    pub fn append(&mut self, mut trace: ExecutionTrace) -> Result<usize, TraceError> {
        trace.validate(&self.bounds)?;
        let id = self.traces.len() + 1;
        trace.id = id;
        self.traces.push(trace);
        Ok(id)
    }

    /// Rebuilds a cache from stored traces whose ids must already read `1..=n`.
    pub(crate) fn from_stored(
        traces: Vec<ExecutionTrace>,
        bounds: ParamBounds,
    ) -> Result<Self, TraceError> {
        let mut seen = std::collections::HashSet::new();
        for (i, t) in traces.iter().enumerate() {
            if !seen.insert(t.id) {
                return Err(TraceError::Store(format!("duplicate trace id {}", t.id)));
            }
            if t.id != i + 1 {
                return Err(TraceError::Store(format!(
                    "trace ids must run 1..n in order; position {} has id {}",
                    i + 1,
                    t.id
                )));
            }
            t.validate(&bounds)
                .map_err(|e| TraceError::Store(format!("trace {}: {e}", t.id)))?;
        }
        Ok(Self { traces, bounds })
    }

    pub fn traces(&self) -> &[ExecutionTrace] {
        &self.traces
    }

    pub fn get(&self, id: usize) -> Option<&ExecutionTrace> {
        id.checked_sub(1).and_then(|i| self.traces.get(i))
    }

    pub fn ids(&self) -> Vec<usize> {
        self.traces.iter().map(|t| t.id).collect()
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// The `n` most recent traces, oldest first.
    pub fn recent(&self, n: usize) -> &[ExecutionTrace] {
        &self.traces[self.traces.len().saturating_sub(n)..]
    }

    /// Independent copy for readers while a writer keeps appending.
    pub fn snapshot(&self) -> TraceCache {
        self.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{LandingRecord, ParamVector, TraceRow};

    pub(crate) fn trace(x: f64) -> ExecutionTrace {
        ExecutionTrace {
            id: 0,
            params: ParamVector::ONES,
            rows: vec![TraceRow {
                time: 1,
                paddle: [0.0; 3],
                ball: [0.0, -1.0, 0.3],
            }],
            landing: LandingRecord {
                x,
                y: 0.5,
                z: 0.0,
                on_table: true,
                peak_height: 0.3,
            },
        }
    }

    #[test]
    fn ids_are_sequential() {
        let mut c = TraceCache::new();
        assert_eq!(c.append(trace(0.1)).unwrap(), 1);
        for k in 2..=24 {
            assert_eq!(c.append(trace(0.1)).unwrap(), k);
        }
        assert_eq!(c.ids(), (1..=24).collect::<Vec<_>>());
        assert_eq!(c.get(24).unwrap().id, 24);
        assert!(c.get(0).is_none());
    }

    #[test]
    fn invalid_trace_rejected() {
        let mut c = TraceCache::new();
        let mut t = trace(0.0);
        t.params[3] = 2.0;
        assert!(matches!(c.append(t), Err(TraceError::Invalid(_))));
        let mut t = trace(0.0);
        t.rows.clear();
        assert!(c.append(t).is_err());
        assert!(c.is_empty());
    }

    #[test]
    fn recent_keeps_order() {
        let mut c = TraceCache::new();
        for k in 0..5 {
            c.append(trace(k as f64 * 0.1)).unwrap();
        }
        let ids: Vec<usize> = c.recent(2).iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![4, 5]);
        assert_eq!(c.recent(10).len(), 5);
    }
}
