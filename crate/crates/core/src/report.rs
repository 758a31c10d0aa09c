//! Outcome records of the randomized property checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// At most this many failing witnesses are kept per report.
pub const MAX_STORED_FAILURES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub trial: usize,
    /// Which sub-check tripped, e.g. `"recursion"` or a family index triple.
    pub context: String,
    pub witness: BTreeMap<String, Vec<f64>>,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Failure {
    pub fn new(trial: usize, context: impl Into<String>) -> Self {
        Self {
            trial,
            context: context.into(),
            witness: BTreeMap::new(),
            observed: Vec::new(),
            expected: Vec::new(),
            error: None,
        }
    }

    pub fn with(mut self, key: &str, values: &[f64]) -> Self {
        self.witness.insert(key.to_string(), values.to_vec());
        self
    }

    pub fn observed(mut self, values: &[f64]) -> Self {
        self.observed = values.to_vec();
        self
    }

    pub fn expected(mut self, values: &[f64]) -> Self {
        self.expected = values.to_vec();
        self
    }

    pub fn from_error(trial: usize, context: impl Into<String>, err: &Error) -> Self {
        let mut f = Self::new(trial, context);
        f.error = Some(err.to_string());
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub trials: usize,
    pub passes: usize,
    pub failure_count: usize,
    pub skipped: usize,
    /// Largest residual or violation seen over all evaluated trials.
    pub max_residual: f64,
    pub failures: Vec<Failure>,
}

impl CheckReport {
    pub fn new(check_name: impl Into<String>) -> Self {
        Self {
            check_name: check_name.into(),
            trials: 0,
            passes: 0,
            failure_count: 0,
            skipped: 0,
            max_residual: 0.0,
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failure_count == 0
    }

    fn bump(&mut self, residual: f64) {
        self.trials += 1;
        if residual.is_finite() && residual > self.max_residual {
            self.max_residual = residual;
        }
    }

    pub fn pass(&mut self, residual: f64) {
        self.bump(residual);
        self.passes += 1;
    }

    pub fn fail(&mut self, residual: f64, failure: Failure) {
        self.bump(residual);
        self.failure_count += 1;
        if self.failures.len() < MAX_STORED_FAILURES {
            self.failures.push(failure);
        }
    }

    pub fn skip(&mut self) {
        self.trials += 1;
        self.skipped += 1;
    }

    /// Records a pass when `ok`, otherwise the failure built lazily.
    pub fn record(&mut self, ok: bool, residual: f64, failure: impl FnOnce() -> Failure) {
        if ok {
            self.pass(residual);
        } else {
            self.fail(residual, failure());
        }
    }

    /// Folds another report into this one, keeping this report's name.
    pub fn absorb(&mut self, other: CheckReport) {
        self.trials += other.trials;
        self.passes += other.passes;
        self.failure_count += other.failure_count;
        self.skipped += other.skipped;
        if other.max_residual > self.max_residual {
            self.max_residual = other.max_residual;
        }
        let room = MAX_STORED_FAILURES.saturating_sub(self.failures.len());
        self.failures.extend(other.failures.into_iter().take(room));
    }
}
