use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate_commit_prediction, classify_outcomes, compute_metrics, ConfusionCounts, MetricsReport};
use crate::agents::{Pipeline, Stage};
use crate::dataset::{snapshot_tests, CommitRange, CommitRecord, Dataset, Subset, TestConventions, TestId};
use crate::diff::PathRules;
use crate::git::Repo;
use crate::llm::Embedder;
use crate::retrieval::{build_index, IndexCache, IndexMode, TestSummarizer, VectorIndex};

pub const DEFAULT_TRIALS: usize = 2;

/// Supplies the test index for a commit's snapshot.
pub trait IndexSource: Sync {
    fn index_for(&self, commit_id: &str) -> Result<VectorIndex, String>;
}

/// Builds indexes from the repository, reusing cached indexes and test
/// summaries when a cache directory is configured.
pub struct RepoIndexSource<'a> {
    pub repo: &'a Repo,
    pub rules: &'a PathRules,
    pub conventions: &'a TestConventions,
    pub mode: IndexMode,
    pub embedder: &'a dyn Embedder,
    pub summarizer: Option<&'a dyn TestSummarizer>,
    pub cache: Option<IndexCache>,
}

impl IndexSource for RepoIndexSource<'_> {
    fn index_for(&self, commit_id: &str) -> Result<VectorIndex, String> {
        let commit = self.repo.resolve_commit(commit_id).map_err(|e| e.to_string())?;
        let fingerprint = self.embedder.fingerprint();
        if let Some(cache) = &self.cache {
            if let Some(index) = cache.load(&commit, self.mode, &fingerprint).map_err(|e| e.to_string())? {
                return Ok(index);
            }
        }
        let snapshot = snapshot_tests(self.repo, &commit, self.rules, self.conventions).map_err(|e| e.to_string())?;
        let cached = self
            .cache
            .as_ref()
            .filter(|_| self.mode == IndexMode::Summary)
            .map(|c| c.load_summaries(&commit))
            .unwrap_or_default();
        let summarizer = self.summarizer;
        let reuse = |test: &crate::dataset::TestCase| -> Result<String, String> {
            if let Some(s) = cached.get(&test.id.to_string()) {
                return Ok(s.clone());
            }
            summarizer.ok_or("no test summarizer configured")?.summarize_test(test)
        };
        let summarizer: Option<&dyn TestSummarizer> = (self.mode == IndexMode::Summary).then_some(&reuse as _);
        let index =
            build_index(&commit, &snapshot.tests, self.mode, self.embedder, summarizer).map_err(|e| e.to_string())?;
        if let Some(cache) = &self.cache {
            cache.store(&index).map_err(|e| e.to_string())?;
        }
        Ok(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub trials: usize,
    pub parallelism: usize,
    pub mode: IndexMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { trials: DEFAULT_TRIALS, parallelism: 1, mode: IndexMode::RawCode }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub commit_id: String,
    /// Absent when the whole commit failed before prediction.
    pub change: Option<String>,
    pub stage: Option<Stage>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitResult {
    pub commit_id: String,
    pub subset: Subset,
    pub counts: ConfusionCounts,
    pub needs_update_counts: ConfusionCounts,
    pub suggested: BTreeSet<TestId>,
    pub ground_truth: BTreeSet<TestId>,
    pub changes: usize,
    pub failed_changes: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    /// Metrics of the summed counts.
    pub micro: MetricsReport,
    /// Mean of per-commit metrics, each over the commits where it is defined.
    pub macro_avg: MetricsReport,
    pub avg_fp_per_commit: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub commits: usize,
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub summary: SubsetSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub commits: Vec<CommitResult>,
    pub failures: Vec<FailureRecord>,
    /// Commits excluded from scoring.
    pub failed_commits: Vec<String>,
    pub changed: SubsetReport,
    pub unchanged: SubsetReport,
    pub changed_needs_update_only: SubsetReport,
    pub unchanged_needs_update_only: SubsetReport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub changed: SubsetSummary,
    pub unchanged: SubsetSummary,
    pub changed_needs_update_only: SubsetSummary,
    pub unchanged_needs_update_only: SubsetSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub repo: String,
    pub range: CommitRange,
    pub dataset_commits: usize,
    pub mode: IndexMode,
    pub chat_provider: String,
    pub embedder: String,
    pub trials: Vec<TrialReport>,
    pub mean: MeanReport,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

fn mean_metrics<'a>(reports: impl Iterator<Item = &'a MetricsReport> + Clone) -> MetricsReport {
    MetricsReport {
        accuracy: mean(reports.clone().map(|m| m.accuracy)),
        recall: mean(reports.clone().map(|m| m.recall)),
        precision: mean(reports.clone().map(|m| m.precision)),
        f1: mean(reports.clone().map(|m| m.f1)),
        f2: mean(reports.map(|m| m.f2)),
    }
}

fn subset_report(results: &[CommitResult], subset: Subset, needs_update_only: bool) -> SubsetReport {
    let pick = |r: &CommitResult| if needs_update_only { r.needs_update_counts } else { r.counts };
    let members: Vec<ConfusionCounts> = results.iter().filter(|r| r.subset == subset).map(pick).collect();
    let counts = members.iter().fold(ConfusionCounts::default(), |acc, c| acc + *c);
    if subset == Subset::Unchanged {
        // No ground truth in this subset, so nothing can be hit or missed.
        assert!(counts.tp == 0 && counts.fn_ == 0, "unchanged subset with tp/fn: {counts:?}");
    }
    let per_commit: Vec<MetricsReport> = members.iter().map(compute_metrics).collect();
    SubsetReport {
        commits: members.len(),
        counts,
        summary: SubsetSummary {
            micro: compute_metrics(&counts),
            macro_avg: mean_metrics(per_commit.iter()),
            avg_fp_per_commit: (!members.is_empty()).then(|| counts.fp as f64 / members.len() as f64),
        },
    }
}

fn mean_summary<'a>(items: impl Iterator<Item = &'a SubsetSummary> + Clone) -> SubsetSummary {
    SubsetSummary {
        micro: mean_metrics(items.clone().map(|s| &s.micro)),
        macro_avg: mean_metrics(items.clone().map(|s| &s.macro_avg)),
        avg_fp_per_commit: mean(items.map(|s| s.avg_fp_per_commit)),
    }
}

enum CommitOutcome {
    Scored(CommitResult, Vec<FailureRecord>),
    Failed(Vec<FailureRecord>),
}

fn evaluate_commit(record: &CommitRecord, pipeline: &Pipeline<'_>, indexes: &dyn IndexSource) -> CommitOutcome {
    let commit_failure = |message: String| {
        CommitOutcome::Failed(vec![FailureRecord {
            commit_id: record.commit_id.clone(),
            change: None,
            stage: None,
            message,
        }])
    };
    let index = match indexes.index_for(&record.commit_id) {
        Ok(i) => i,
        Err(e) => return commit_failure(format!("index unavailable: {e}")),
    };
    let mut predictions = Vec::new();
    let mut failures = Vec::new();
    for change in &record.changes {
        match pipeline.predict(change, &index) {
            Ok(p) => predictions.push(p),
            Err(f) => failures.push(FailureRecord {
                commit_id: record.commit_id.clone(),
                change: Some(f.change.to_string()),
                stage: Some(f.stage),
                message: f.message,
            }),
        }
    }
    if predictions.is_empty() {
        failures.push(FailureRecord {
            commit_id: record.commit_id.clone(),
            change: None,
            stage: None,
            message: format!("all {} change predictions failed", record.changes.len()),
        });
        return CommitOutcome::Failed(failures);
    }
    let scored = aggregate_commit_prediction(&predictions, false)
        .and_then(|s| Ok((classify_outcomes(&s, &record.ground_truth, &record.universe)?, s)))
        .and_then(|(c, s)| {
            let nu = aggregate_commit_prediction(&predictions, true)?;
            Ok((c, classify_outcomes(&nu, &record.ground_truth, &record.universe)?, s))
        });
    match scored {
        Ok((counts, needs_update_counts, suggested)) => CommitOutcome::Scored(
            CommitResult {
                commit_id: record.commit_id.clone(),
                subset: record.subset,
                counts,
                needs_update_counts,
                suggested,
                ground_truth: record.ground_truth.clone(),
                changes: record.changes.len(),
                failed_changes: failures.len(),
            },
            failures,
        ),
        Err(e) => {
            let mut all = failures;
            all.push(FailureRecord {
                commit_id: record.commit_id.clone(),
                change: None,
                stage: None,
                message: e.to_string(),
            });
            CommitOutcome::Failed(all)
        }
    }
}

fn run_trial(
    trial: usize,
    dataset: &Dataset,
    pipeline: &Pipeline<'_>,
    indexes: &dyn IndexSource,
    parallelism: usize,
) -> TrialReport {
    let eval = |r: &CommitRecord| evaluate_commit(r, pipeline, indexes);
    let outcomes: Vec<CommitOutcome> = if parallelism <= 1 {
        dataset.records.iter().map(eval).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
            Ok(pool) => pool.install(|| dataset.records.par_iter().map(eval).collect()),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); evaluating sequentially");
                dataset.records.iter().map(eval).collect()
            }
        }
    };

    let mut commits = Vec::new();
    let mut failures = Vec::new();
    let mut failed_commits = Vec::new();
    for (record, outcome) in dataset.records.iter().zip(outcomes) {
        match outcome {
            CommitOutcome::Scored(result, mut f) => {
                commits.push(result);
                failures.append(&mut f);
            }
            CommitOutcome::Failed(mut f) => {
                failed_commits.push(record.commit_id.clone());
                failures.append(&mut f);
            }
        }
    }
    if !failed_commits.is_empty() {
        log::warn!(
            "trial {trial}: {} of {} commits excluded from scoring after prediction failures",
            failed_commits.len(),
            dataset.records.len()
        );
    }
    TrialReport {
        trial,
        changed: subset_report(&commits, Subset::Changed, false),
        unchanged: subset_report(&commits, Subset::Unchanged, false),
        changed_needs_update_only: subset_report(&commits, Subset::Changed, true),
        unchanged_needs_update_only: subset_report(&commits, Subset::Unchanged, true),
        commits,
        failures,
        failed_commits,
    }
}

/// Predicts every change of every commit, `options.trials` times, and
/// scores each commit's union of suggestions against its ground truth.
///
/// A commit is scored from whichever of its change predictions succeeded;
/// it is excluded only when its index cannot be built or every prediction
/// failed. All failures are listed in the trial report.
pub fn evaluate_dataset(
    dataset: &Dataset,
    pipeline: &Pipeline<'_>,
    indexes: &dyn IndexSource,
    options: &EvalOptions,
) -> EvaluationRun {
    let trials: Vec<TrialReport> =
        (1..=options.trials.max(1)).map(|t| run_trial(t, dataset, pipeline, indexes, options.parallelism)).collect();
    let mean = MeanReport {
        changed: mean_summary(trials.iter().map(|t| &t.changed.summary)),
        unchanged: mean_summary(trials.iter().map(|t| &t.unchanged.summary)),
        changed_needs_update_only: mean_summary(trials.iter().map(|t| &t.changed_needs_update_only.summary)),
        unchanged_needs_update_only: mean_summary(trials.iter().map(|t| &t.unchanged_needs_update_only.summary)),
    };
    EvaluationRun {
        repo: dataset.manifest.repo.clone(),
        range: dataset.manifest.range.clone(),
        dataset_commits: dataset.records.len(),
        mode: options.mode,
        chat_provider: pipeline.chat.name(),
        embedder: pipeline.embedder.fingerprint(),
        trials,
        mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(subset: Subset, counts: ConfusionCounts) -> CommitResult {
        CommitResult {
            commit_id: "c".into(),
            subset,
            counts,
            needs_update_counts: counts,
            suggested: BTreeSet::new(),
            ground_truth: BTreeSet::new(),
            changes: 1,
            failed_changes: 0,
        }
    }

    #[test]
    fn micro_and_macro_differ() {
        let results = [
            result(Subset::Changed, ConfusionCounts { tp: 1, fp: 0, fn_: 0, tn: 9 }),
            result(Subset::Changed, ConfusionCounts { tp: 1, fp: 3, fn_: 0, tn: 6 }),
            result(Subset::Unchanged, ConfusionCounts { fp: 2, tn: 8, ..Default::default() }),
        ];
        let changed = subset_report(&results, Subset::Changed, false);
        assert_eq!(changed.commits, 2);
        assert_eq!(changed.summary.micro.precision, Some(2.0 / 5.0));
        assert_eq!(changed.summary.macro_avg.precision, Some((1.0 + 0.25) / 2.0));
        let unchanged = subset_report(&results, Subset::Unchanged, false);
        assert_eq!(unchanged.summary.avg_fp_per_commit, Some(2.0));
        assert_eq!(unchanged.summary.micro.accuracy, Some(0.8));
        assert_eq!(unchanged.summary.micro.recall, None);
    }

    #[test]
    fn empty_subset_has_no_metrics() {
        let r = subset_report(&[], Subset::Changed, false);
        assert_eq!(r.commits, 0);
        assert_eq!(r.summary, SubsetSummary::default());
    }
}
