use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::run::{EvaluationRun, SubsetReport, SubsetSummary, TrialReport};
use super::MetricsReport;

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {message}")]
pub struct ReportError {
    pub path: String,
    pub message: String,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

fn changed_row(out: &mut String, label: &str, commits: Option<usize>, m: &MetricsReport) {
    let commits = commits.map_or_else(String::new, |c| c.to_string());
    let _ = writeln!(
        out,
        "  {label:<24} {commits:>7} {:>8} {:>9} {:>8} {:>7} {:>7}",
        cell(m.recall),
        cell(m.precision),
        cell(m.accuracy),
        cell(m.f1),
        cell(m.f2)
    );
}

fn unchanged_row(out: &mut String, label: &str, commits: Option<usize>, s: &SubsetSummary) {
    let commits = commits.map_or_else(String::new, |c| c.to_string());
    let _ = writeln!(out, "  {label:<24} {commits:>7} {:>14} {:>9}", cell(s.avg_fp_per_commit), cell(s.micro.accuracy));
}

fn section(
    out: &mut String,
    changed: (&SubsetSummary, Option<usize>),
    needs_update_only: &SubsetSummary,
    unchanged: (&SubsetSummary, Option<usize>),
) {
    let _ = writeln!(
        out,
        "  {:<24} {:>7} {:>8} {:>9} {:>8} {:>7} {:>7}",
        "Changed (tests updated)", "commits", "recall", "precision", "accuracy", "F1", "F2"
    );
    changed_row(out, "micro", changed.1, &changed.0.micro);
    changed_row(out, "macro", changed.1, &changed.0.macro_avg);
    changed_row(out, "micro, needs-update only", changed.1, &needs_update_only.micro);
    let _ =
        writeln!(out, "  {:<24} {:>7} {:>14} {:>9}", "Unchanged (no updates)", "commits", "avg FPs/commit", "accuracy");
    unchanged_row(out, "", unchanged.1, unchanged.0);
}

fn trial_block(out: &mut String, t: &TrialReport, dataset_commits: usize) {
    let _ = writeln!(out, "Trial {}", t.trial);
    let c: &SubsetReport = &t.changed;
    section(
        out,
        (&c.summary, Some(c.commits)),
        &t.changed_needs_update_only.summary,
        (&t.unchanged.summary, Some(t.unchanged.commits)),
    );
    let failed_changes = t.failures.iter().filter(|f| f.change.is_some()).count();
    let rate = if dataset_commits == 0 { 0.0 } else { 100.0 * t.failed_commits.len() as f64 / dataset_commits as f64 };
    let _ = writeln!(
        out,
        "  excluded commits: {} of {} ({rate:.1}%), failed change predictions: {failed_changes}",
        t.failed_commits.len(),
        dataset_commits
    );
    if !t.failed_commits.is_empty() {
        let _ = writeln!(out, "  WARNING: excluded commits are not counted in any metric above");
    }
}

/// Console rendering: one block per trial, then the mean.
pub fn render_table(run: &EvaluationRun) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Evaluation of {} ({} commits, {} index, chat: {}, embedder: {})\n",
        run.repo, run.dataset_commits, run.mode, run.chat_provider, run.embedder
    );
    for t in &run.trials {
        trial_block(&mut out, t, run.dataset_commits);
        out.push('\n');
    }
    let _ = writeln!(out, "Mean of {} trial(s)", run.trials.len());
    section(&mut out, (&run.mean.changed, None), &run.mean.changed_needs_update_only, (&run.mean.unchanged, None));
    out
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError { path: path.display().to_string(), message: e.to_string() }
}

/// Writes the full run as pretty JSON.
pub fn write_report(run: &EvaluationRun, path: &Path) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(run).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Writes one JSON line per scored commit per trial.
pub fn write_commit_details(run: &EvaluationRun, path: &Path) -> Result<(), ReportError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for t in &run.trials {
        for c in &t.commits {
            let line = serde_json::json!({ "trial": t.trial, "result": c });
            writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}
