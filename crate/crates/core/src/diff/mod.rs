//! Unified diffs: parsing, rendering, production from git, and splitting
//! into per-hunk code changes.
//!
//! A "code change" is one hunk of a context-extended diff against a single
//! source file. Test and non-source hunks are never emitted as changes.

mod parse;
mod paths;
mod render;

use serde::{Deserialize, Serialize};

use crate::git::{GitError, Repo};

pub use parse::parse_unified_diff;
pub use paths::{classify_path, PathClass, PathRule, PathRules, PathRulesError};
pub use render::{render_commit_diff, render_file_diff};

/// Context width used when mining and predicting unless configured otherwise.
pub const DEFAULT_CONTEXT_LINES: u32 = 9;

/// Path used by unified diffs for the missing side of an added or deleted file.
pub const NULL_PATH: &str = "/dev/null";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DiffError {
    #[error("malformed diff at line {line}: {message}")]
    MalformedDiff { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LineTag {
    Context,
    Added,
    Removed,
}

impl LineTag {
    pub fn prefix(self) -> char {
        match self {
            LineTag::Context => ' ',
            LineTag::Added => '+',
            LineTag::Removed => '-',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiffLine {
    pub tag: LineTag,
    pub text: String,
    /// Set when the line is followed by `\ No newline at end of file`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_newline: bool,
}

impl DiffLine {
    pub fn new(tag: LineTag, text: impl Into<String>) -> Self {
        Self { tag, text: text.into(), no_newline: false }
    }
}

/// One contiguous edited region with its surrounding context.
///
/// `old_start`/`new_start` are 1-based; git reports 0 for the empty side of
/// a file creation or deletion, which is the only case a start of 0 occurs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: u32,
    pub old_len: u32,
    pub new_start: u32,
    pub new_len: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub section: String,
    pub lines: Vec<DiffLine>,
}

impl Hunk {
    /// Number of lines on the old side (context + removed).
    pub fn counted_old(&self) -> u32 {
        self.lines.iter().filter(|l| l.tag != LineTag::Added).count() as u32
    }

    pub fn counted_new(&self) -> u32 {
        self.lines.iter().filter(|l| l.tag != LineTag::Removed).count() as u32
    }

    pub fn is_consistent(&self) -> bool {
        self.counted_old() == self.old_len && self.counted_new() == self.new_len
    }

    /// New-side line numbers of added lines.
    pub fn added_line_numbers(&self) -> Vec<u32> {
        self.side_line_numbers(LineTag::Added)
    }

    /// Old-side line numbers of removed lines.
    pub fn removed_line_numbers(&self) -> Vec<u32> {
        self.side_line_numbers(LineTag::Removed)
    }

    fn side_line_numbers(&self, wanted: LineTag) -> Vec<u32> {
        let mut old = self.old_start;
        let mut new = self.new_start;
        let mut out = Vec::new();
        for line in &self.lines {
            match line.tag {
                LineTag::Context => {
                    old += 1;
                    new += 1;
                }
                LineTag::Added => {
                    if wanted == LineTag::Added {
                        out.push(new);
                    }
                    new += 1;
                }
                LineTag::Removed => {
                    if wanted == LineTag::Removed {
                        out.push(old);
                    }
                    old += 1;
                }
            }
        }
        out
    }

    pub fn has_edits(&self) -> bool {
        self.lines.iter().any(|l| l.tag != LineTag::Context)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChangeKind {
    Modified,
    Added,
    Deleted,
    Renamed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub old_path: String,
    pub new_path: String,
    pub kind: ChangeKind,
    pub hunks: Vec<Hunk>,
    /// False for binary files and entries without hunks (rename-only, mode-only).
    pub textual: bool,
}

impl FileDiff {
    /// The path that exists after the change, or the old path for deletions.
    pub fn path(&self) -> &str {
        match self.kind {
            ChangeKind::Deleted => &self.old_path,
            _ => &self.new_path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitDiff {
    pub commit_id: String,
    pub file_diffs: Vec<FileDiff>,
    pub context_lines: u32,
}

impl CommitDiff {
    pub fn textual_files(&self) -> impl Iterator<Item = &FileDiff> {
        self.file_diffs.iter().filter(|f| f.textual)
    }
}

/// A single hunk against a single source file, rendered as a standalone diff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeChange {
    pub commit_id: String,
    pub file_path: String,
    /// Position of the hunk within its file diff.
    pub hunk_index: usize,
    pub hunk: Hunk,
    pub rendered_text: String,
}

impl CodeChange {
    pub fn change_ref(&self) -> ChangeRef {
        ChangeRef { commit_id: self.commit_id.clone(), file_path: self.file_path.clone(), hunk_index: self.hunk_index }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChangeRef {
    pub commit_id: String,
    pub file_path: String,
    pub hunk_index: usize,
}

impl std::fmt::Display for ChangeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let short = &self.commit_id[..self.commit_id.len().min(10)];
        write!(f, "{short}:{}#{}", self.file_path, self.hunk_index)
    }
}

/// Runs `git diff` from the first parent (or the empty tree for root
/// commits) to `commit_id` with the requested context width.
pub fn produce_diff(repo: &Repo, commit_id: &str, context_lines: u32) -> Result<CommitDiff, ProduceError> {
    let commit = repo.resolve_commit(commit_id)?;
    let base = match repo.first_parent(&commit)? {
        Some(parent) => parent,
        None => repo.empty_tree()?,
    };
    let text = repo.diff(&base, &commit, context_lines)?;
    let mut diff = parse_unified_diff(&text)?;
    diff.commit_id = commit;
    diff.context_lines = context_lines;
    Ok(diff)
}

#[derive(Debug, thiserror::Error)]
pub enum ProduceError {
    #[error(transparent)]
    Git(#[from] GitError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// One change per hunk of every textual, source-classified file, in file
/// order then hunk order.
pub fn split_changes(diff: &CommitDiff, rules: &PathRules) -> Vec<CodeChange> {
    let mut changes = Vec::new();
    for file in diff.textual_files() {
        if classify_path(file.path(), rules) != PathClass::Source {
            continue;
        }
        for (hunk_index, hunk) in file.hunks.iter().enumerate() {
            changes.push(single_hunk_change(&diff.commit_id, file, hunk_index, hunk));
        }
    }
    changes
}

fn single_hunk_change(commit_id: &str, file: &FileDiff, hunk_index: usize, hunk: &Hunk) -> CodeChange {
    let single = FileDiff { hunks: vec![hunk.clone()], ..file.clone() };
    CodeChange {
        commit_id: commit_id.to_string(),
        file_path: file.path().to_string(),
        hunk_index,
        hunk: hunk.clone(),
        rendered_text: render_file_diff(&single),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_SOURCE_ONE_TEST: &str = "\
diff --git a/src/main/java/A.java b/src/main/java/A.java
--- a/src/main/java/A.java
+++ b/src/main/java/A.java
@@ -1,2 +1,3 @@
 class A {
+  int x;
 }
@@ -40,2 +41,2 @@ class A {
-  int y;
+  long y;
 }
diff --git a/src/test/java/ATest.java b/src/test/java/ATest.java
--- a/src/test/java/ATest.java
+++ b/src/test/java/ATest.java
@@ -3,1 +3,2 @@
 @Test
+void testX() {}
";

    #[test]
    fn split_keeps_only_source_hunks() {
        let diff = parse_unified_diff(TWO_SOURCE_ONE_TEST).unwrap();
        let changes = split_changes(&diff, &PathRules::default());
        assert_eq!(changes.len(), 2);
        assert_eq!(changes[0].hunk_index, 0);
        assert_eq!(changes[1].hunk_index, 1);
        assert!(changes.iter().all(|c| c.file_path == "src/main/java/A.java"));
    }

    #[test]
    fn split_of_test_only_diff_is_empty() {
        let text = TWO_SOURCE_ONE_TEST.split("diff --git a/src/test").nth(1).unwrap();
        let diff = parse_unified_diff(&format!("diff --git a/src/test{text}")).unwrap();
        assert_eq!(diff.file_diffs.len(), 1);
        assert!(split_changes(&diff, &PathRules::default()).is_empty());
    }

    #[test]
    fn rendered_change_reparses_to_single_hunk() {
        let diff = parse_unified_diff(TWO_SOURCE_ONE_TEST).unwrap();
        for change in split_changes(&diff, &PathRules::default()) {
            let reparsed = parse_unified_diff(&change.rendered_text).unwrap();
            assert_eq!(reparsed.file_diffs.len(), 1);
            assert_eq!(reparsed.file_diffs[0].hunks, vec![change.hunk.clone()]);
            assert_eq!(reparsed.file_diffs[0].new_path, change.file_path);
        }
    }

    #[test]
    fn line_numbers_follow_hunk_positions() {
        let diff = parse_unified_diff(TWO_SOURCE_ONE_TEST).unwrap();
        let hunk = &diff.file_diffs[0].hunks[1];
        assert_eq!(hunk.removed_line_numbers(), vec![40]);
        assert_eq!(hunk.added_line_numbers(), vec![41]);
    }
}
