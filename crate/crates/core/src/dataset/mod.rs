//! Co-evolution dataset mining.
//!
//! Each commit with source changes becomes a [`CommitRecord`]: its per-hunk
//! source changes, the test methods edited in the same commit (the ground
//! truth) and every test method present at that commit (the universe).

mod extract;
mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diff::{
    classify_path, produce_diff, split_changes, ChangeKind, CodeChange, DiffError, PathClass, PathRules, ProduceError,
};
use crate::git::{GitError, Repo};

pub use extract::{extract_test_cases, ExtractError, SpanStyle, TestConventions};
pub use io::{load_dataset, read_dataset, serialize_dataset, write_dataset, SCHEMA_VERSION};

/// Identity of a test method: file, enclosing container, method name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TestId {
    pub file_path: String,
    pub container: String,
    pub method: String,
}

impl TestId {
    pub fn new(file_path: impl Into<String>, container: impl Into<String>, method: impl Into<String>) -> Self {
        Self { file_path: file_path.into(), container: container.into(), method: method.into() }
    }

    /// `Container.method`, or just the method for free functions.
    pub fn short_name(&self) -> String {
        if self.container.is_empty() {
            self.method.clone()
        } else {
            format!("{}.{}", self.container, self.method)
        }
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.file_path, self.short_name())
    }
}

/// Inclusive 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: u32,
    pub end: u32,
}

impl LineSpan {
    pub fn contains(&self, line: u32) -> bool {
        self.start <= line && line <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: TestId,
    pub body: String,
    pub span: LineSpan,
    pub commit_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subset {
    Changed,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub commit_id: String,
    pub changes: Vec<CodeChange>,
    pub ground_truth: BTreeSet<TestId>,
    pub universe: BTreeSet<TestId>,
    /// Ground-truth tests that did not exist before this commit.
    #[serde(default)]
    pub added_tests: BTreeSet<TestId>,
    /// Ground-truth tests removed by this commit. They are part of the
    /// universe even though they are absent from the commit's snapshot.
    #[serde(default)]
    pub deleted_tests: BTreeSet<TestId>,
    pub subset: Subset,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CommitRecord {
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.changes.is_empty() {
            return Err(format!("{}: record without source changes", self.commit_id));
        }
        if !self.ground_truth.is_subset(&self.universe) {
            return Err(format!("{}: ground truth not contained in universe", self.commit_id));
        }
        let expected = if self.ground_truth.is_empty() { Subset::Unchanged } else { Subset::Changed };
        if self.subset != expected {
            return Err(format!("{}: subset flag disagrees with ground truth", self.commit_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRange {
    pub from: Option<String>,
    pub to: String,
}

/// Counts that must be recomputable from the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub commits: usize,
    pub changes: usize,
    pub changed_commits: usize,
    pub unchanged_commits: usize,
    pub changed_subset_changes: usize,
    pub unchanged_subset_changes: usize,
    pub mean_changes_changed: Option<f64>,
    pub mean_changes_unchanged: Option<f64>,
}

impl ManifestCounts {
    pub fn from_records(records: &[CommitRecord]) -> Self {
        let mut counts = Self {
            commits: records.len(),
            changes: 0,
            changed_commits: 0,
            unchanged_commits: 0,
            changed_subset_changes: 0,
            unchanged_subset_changes: 0,
            mean_changes_changed: None,
            mean_changes_unchanged: None,
        };
        for record in records {
            counts.changes += record.changes.len();
            match record.subset {
                Subset::Changed => {
                    counts.changed_commits += 1;
                    counts.changed_subset_changes += record.changes.len();
                }
                Subset::Unchanged => {
                    counts.unchanged_commits += 1;
                    counts.unchanged_subset_changes += record.changes.len();
                }
            }
        }
        let mean = |total: usize, n: usize| (n > 0).then(|| total as f64 / n as f64);
        counts.mean_changes_changed = mean(counts.changed_subset_changes, counts.changed_commits);
        counts.mean_changes_unchanged = mean(counts.unchanged_subset_changes, counts.unchanged_commits);
        counts
    }

    /// Name of the first field that differs from `other`.
    pub fn first_mismatch(&self, other: &Self) -> Option<(&'static str, String, String)> {
        let ints = [
            ("commits", self.commits, other.commits),
            ("changes", self.changes, other.changes),
            ("changed_commits", self.changed_commits, other.changed_commits),
            ("unchanged_commits", self.unchanged_commits, other.unchanged_commits),
            ("changed_subset_changes", self.changed_subset_changes, other.changed_subset_changes),
            ("unchanged_subset_changes", self.unchanged_subset_changes, other.unchanged_subset_changes),
        ];
        for (name, a, b) in ints {
            if a != b {
                return Some((name, a.to_string(), b.to_string()));
            }
        }
        let floats = [
            ("mean_changes_changed", self.mean_changes_changed, other.mean_changes_changed),
            ("mean_changes_unchanged", self.mean_changes_unchanged, other.mean_changes_unchanged),
        ];
        for (name, a, b) in floats {
            let same = match (a, b) {
                (Some(x), Some(y)) => (x - y).abs() < 1e-9,
                (None, None) => true,
                _ => false,
            };
            if !same {
                return Some((name, format!("{a:?}"), format!("{b:?}")));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusions {
    pub commits_without_source_changes: usize,
    pub unencapsulated_test_hunks: usize,
    pub unparsable_test_files: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub repo: String,
    pub range: CommitRange,
    pub context_lines: u32,
    pub path_rules_digest: String,
    pub conventions_digest: String,
    /// Merge commits are diffed against their first parent.
    pub merge_policy: String,
    /// Tests created in a commit count as ground truth for that commit.
    pub ground_truth_includes_added: bool,
    pub counts: ManifestCounts,
    pub exclusions: Exclusions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub manifest: Manifest,
    pub records: Vec<CommitRecord>,
}

impl Dataset {
    /// Wraps records with a manifest whose counts are derived from them.
    pub fn from_records(mut manifest: Manifest, records: Vec<CommitRecord>) -> Self {
        manifest.counts = ManifestCounts::from_records(&records);
        Self { manifest, records }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Git(#[from] GitError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("every commit in the range was excluded ({examined} examined); check the path rules")]
    EmptyDataset { examined: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dataset line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("manifest declares {field} = {declared} but records give {actual}")]
    ManifestMismatch { field: &'static str, declared: String, actual: String },
    #[error("dataset file has no manifest line")]
    MissingManifest,
}

impl From<ProduceError> for DatasetError {
    fn from(e: ProduceError) -> Self {
        match e {
            ProduceError::Git(g) => DatasetError::Git(g),
            ProduceError::Diff(d) => DatasetError::Diff(d),
        }
    }
}

/// All test methods present at one commit.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSnapshot {
    pub commit_id: String,
    pub tests: Vec<TestCase>,
    pub warnings: Vec<String>,
}

impl TestSnapshot {
    pub fn ids(&self) -> BTreeSet<TestId> {
        self.tests.iter().map(|t| t.id.clone()).collect()
    }
}

/// Extracts every test in every test-classified file of `commit`.
pub fn snapshot_tests(
    repo: &Repo,
    commit: &str,
    rules: &PathRules,
    conventions: &TestConventions,
) -> Result<TestSnapshot, GitError> {
    let commit = repo.resolve_commit(commit)?;
    let paths: Vec<String> =
        repo.list_files(&commit)?.into_iter().filter(|p| classify_path(p, rules) == PathClass::Test).collect();
    let contents = repo.read_files(&commit, &paths)?;
    let mut snapshot = TestSnapshot { commit_id: commit.clone(), tests: Vec::new(), warnings: Vec::new() };
    for (path, text) in paths.iter().zip(contents) {
        let Some(text) = text else { continue };
        match extract_test_cases(path, &text, &commit, conventions) {
            Ok(tests) => snapshot.tests.extend(tests),
            Err(e) => {
                log::warn!("{e}");
                snapshot.warnings.push(e.to_string());
            }
        }
    }
    Ok(snapshot)
}

pub fn conventions_digest(conventions: &TestConventions) -> String {
    let canonical = serde_json::to_string(conventions).expect("conventions serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub range: CommitRange,
    pub context_lines: u32,
    pub rules: PathRules,
    pub conventions: TestConventions,
}

/// Mines `range` into a dataset.
///
/// Commits without source hunks are skipped entirely. Test hunks whose
/// edited lines fall outside every extracted test method are dropped.
pub fn build_dataset(repo: &Repo, options: &BuildOptions) -> Result<Dataset, DatasetError> {
    let commits = repo.rev_list(options.range.from.as_deref(), &options.range.to)?;
    let mut records = Vec::new();
    let mut exclusions = Exclusions::default();

    for commit in &commits {
        match mine_commit(repo, commit, options, &mut exclusions)? {
            Some(record) => records.push(record),
            None => exclusions.commits_without_source_changes += 1,
        }
    }
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset { examined: commits.len() });
    }

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        repo: repo.root().display().to_string(),
        range: CommitRange {
            from: options.range.from.as_deref().map(|f| repo.resolve_commit(f)).transpose()?,
            to: repo.resolve_commit(&options.range.to)?,
        },
        context_lines: options.context_lines,
        path_rules_digest: options.rules.digest(),
        conventions_digest: conventions_digest(&options.conventions),
        merge_policy: "first-parent".into(),
        ground_truth_includes_added: true,
        counts: ManifestCounts::from_records(&[]),
        exclusions,
    };
    Ok(Dataset::from_records(manifest, records))
}

fn mine_commit(
    repo: &Repo,
    commit: &str,
    options: &BuildOptions,
    exclusions: &mut Exclusions,
) -> Result<Option<CommitRecord>, DatasetError> {
    let diff = produce_diff(repo, commit, options.context_lines)?;
    let changes = split_changes(&diff, &options.rules);
    if changes.is_empty() {
        return Ok(None);
    }

    let snapshot = snapshot_tests(repo, commit, &options.rules, &options.conventions)?;
    let mut warnings = snapshot.warnings.clone();
    exclusions.unparsable_test_files += snapshot.warnings.len();
    let mut universe = snapshot.ids();
    let mut by_file: BTreeMap<&str, Vec<&TestCase>> = BTreeMap::new();
    for test in &snapshot.tests {
        by_file.entry(test.id.file_path.as_str()).or_default().push(test);
    }

    let parent = repo.first_parent(commit)?;
    let test_files: Vec<_> =
        diff.textual_files().filter(|f| classify_path(f.path(), &options.rules) == PathClass::Test).collect();
    let old_paths: Vec<String> =
        test_files.iter().filter(|f| f.kind != ChangeKind::Added).map(|f| f.old_path.clone()).collect();
    let old_texts: BTreeMap<String, String> = match &parent {
        Some(parent) => old_paths
            .iter()
            .cloned()
            .zip(repo.read_files(parent, &old_paths)?)
            .filter_map(|(p, t)| t.map(|t| (p, t)))
            .collect(),
        None => BTreeMap::new(),
    };

    let mut ground_truth = BTreeSet::new();
    let mut added_tests = BTreeSet::new();
    let mut deleted_tests = BTreeSet::new();

    for file in test_files {
        let new_tests: &[&TestCase] = match file.kind {
            ChangeKind::Deleted => &[],
            _ => by_file.get(file.new_path.as_str()).map_or(&[], Vec::as_slice),
        };
        let old_tests = match old_texts.get(&file.old_path) {
            Some(text) => {
                match extract_test_cases(&file.old_path, text, parent.as_deref().unwrap_or(""), &options.conventions) {
                    Ok(tests) => tests,
                    Err(e) => {
                        warnings.push(format!("parent version: {e}"));
                        exclusions.unparsable_test_files += 1;
                        Vec::new()
                    }
                }
            }
            None => Vec::new(),
        };
        let old_ids: BTreeSet<&TestId> = old_tests.iter().map(|t| &t.id).collect();

        for hunk in &file.hunks {
            let mut hit = false;
            for line in hunk.added_line_numbers() {
                for test in new_tests.iter().filter(|t| t.span.contains(line)) {
                    hit = true;
                    ground_truth.insert(test.id.clone());
                    if !old_ids.contains(&test.id) {
                        added_tests.insert(test.id.clone());
                    }
                }
            }
            for line in hunk.removed_line_numbers() {
                for test in old_tests.iter().filter(|t| t.span.contains(line)) {
                    hit = true;
                    ground_truth.insert(test.id.clone());
                    if !universe.contains(&test.id) {
                        deleted_tests.insert(test.id.clone());
                    }
                }
            }
            if !hit {
                exclusions.unencapsulated_test_hunks += 1;
            }
        }
    }
    universe.extend(deleted_tests.iter().cloned());

    let subset = if ground_truth.is_empty() { Subset::Unchanged } else { Subset::Changed };
    Ok(Some(CommitRecord {
        commit_id: diff.commit_id.clone(),
        changes,
        ground_truth,
        universe,
        added_tests,
        deleted_tests,
        subset,
        warnings,
    }))
}
