use serde::{Deserialize, Serialize};

/// Where an evaluated point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOrigin {
    #[default]
    Optimizer,
    /// Initial example shown to an agent before its first proposal.
    Seed,
    /// Parsed from an agent reply.
    Agent,
    /// Generated by the harness after the agent exhausted its parse retries.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default)]
    pub origin: StepOrigin,
}

impl StepRecord {
    pub fn new(iteration: usize, x: Vec<f64>, f: f64) -> Self {
        Self {
            iteration,
            x,
            f,
            explanation: None,
            origin: StepOrigin::Optimizer,
        }
    }

    pub fn with_origin(mut self, origin: StepOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_explanation(mut self, text: impl Into<String>) -> Self {
        self.explanation = Some(text.into());
        self
    }
}

/// All evaluations of one run, in order, plus the best one seen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunHistory {
    records: Vec<StepRecord>,
    best: Option<StepRecord>,
    pub gradient_evals: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl RunHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record. Iterations must be strictly increasing.
    pub fn push(&mut self, record: StepRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                record.iteration > last.iteration,
                "iteration {} does not follow {}",
                record.iteration,
                last.iteration
            );
        }
        let improves = self.best.as_ref().is_none_or(|b| record.f < b.f);
        if improves {
            self.best = Some(record.clone());
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn best(&self) -> Option<&StepRecord> {
        self.best.as_ref()
    }

    pub fn best_f(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.f)
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn fail(&mut self, reason: impl Into<String>) {
        self.failure = Some(reason.into());
    }

    /// Running minimum of `f`, one entry per record.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(f64::INFINITY, |best, r| {
                *best = best.min(r.f);
                Some(*best)
            })
            .collect()
    }
}
