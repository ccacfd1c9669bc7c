//! Scoring predictions against mined ground truth.

mod report;
mod run;

use std::collections::BTreeSet;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::agents::{Prediction, Stance};
use crate::dataset::TestId;

pub use report::{render_table, write_commit_details, write_report, ReportError};
pub use run::{
    evaluate_dataset, CommitResult, EvalOptions, EvaluationRun, FailureRecord, IndexSource, MeanReport,
    RepoIndexSource, SubsetReport, SubsetSummary, TrialReport, DEFAULT_TRIALS,
};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("predictions from several commits passed together: {first} and {other}")]
    MixedCommit { first: String, other: String },
    #[error("{set} contains {test}, which is not in the universe")]
    SubsetViolation { set: &'static str, test: TestId },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, tn: self.tn + o.tn, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Metrics with a zero denominator are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `(1 + β²)·P·R / (β²·P + R)`; `None` when either input is missing or
/// both are zero.
pub fn f_beta(precision: Option<f64>, recall: Option<f64>, beta: f64) -> Option<f64> {
    let (p, r) = (precision?, recall?);
    let b2 = beta * beta;
    let den = b2 * p + r;
    (den > 0.0).then(|| (1.0 + b2) * p * r / den)
}

pub fn compute_metrics(c: &ConfusionCounts) -> MetricsReport {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    MetricsReport {
        accuracy: ratio(c.tp + c.tn, c.total()),
        recall,
        precision,
        f1: f_beta(precision, recall, 1.0),
        f2: f_beta(precision, recall, 2.0),
    }
}

pub fn classify_outcomes(
    suggested: &BTreeSet<TestId>,
    ground_truth: &BTreeSet<TestId>,
    universe: &BTreeSet<TestId>,
) -> Result<ConfusionCounts, EvalError> {
    for (set, items) in [("suggested", suggested), ("ground truth", ground_truth)] {
        if let Some(test) = items.iter().find(|t| !universe.contains(*t)) {
            return Err(EvalError::SubsetViolation { set, test: test.clone() });
        }
    }
    let tp = suggested.intersection(ground_truth).count() as u64;
    let fp = suggested.len() as u64 - tp;
    let fn_ = ground_truth.len() as u64 - tp;
    let tn = universe.len() as u64 - tp - fp - fn_;
    Ok(ConfusionCounts { tp, tn, fp, fn_ })
}

/// Union of the tests flagged by a commit's predictions. `needs_update_only`
/// drops review advice.
pub fn aggregate_commit_prediction(
    predictions: &[Prediction],
    needs_update_only: bool,
) -> Result<BTreeSet<TestId>, EvalError> {
    if let Some(first) = predictions.first() {
        if let Some(other) = predictions.iter().find(|p| p.change.commit_id != first.change.commit_id) {
            return Err(EvalError::MixedCommit {
                first: first.change.commit_id.clone(),
                other: other.change.commit_id.clone(),
            });
        }
    }
    Ok(predictions
        .iter()
        .flat_map(|p| &p.suggestions)
        .filter(|s| match s.stance {
            Stance::NeedsUpdate => true,
            Stance::ShouldReview => !needs_update_only,
            Stance::SuggestNew => false,
        })
        .filter_map(|s| s.test_id.clone())
        .collect())
}
