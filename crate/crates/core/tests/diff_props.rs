mod common;

use proptest::prelude::*;

use testmaint::diff::{parse_unified_diff, produce_diff, render_commit_diff, LineTag, DEFAULT_CONTEXT_LINES};
use testmaint::fixture;
use testmaint::git::Repo;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn render_then_parse_is_identity(diff in common::commit_diff_strategy()) {
        let text = render_commit_diff(&diff);
        let parsed = parse_unified_diff(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&parsed, &diff, "rendered:\n{}", text);
        prop_assert_eq!(render_commit_diff(&parsed), text);
        for f in &parsed.file_diffs {
            prop_assert!(f.hunks.iter().all(|h| h.is_consistent()));
        }
    }
}

fn edits(repo: &Repo, commit: &str, context: u32) -> (Vec<String>, Vec<String>, usize) {
    let diff = produce_diff(repo, commit, context).unwrap();
    assert_eq!(diff.context_lines, context);
    let mut added = Vec::new();
    let mut removed = Vec::new();
    let mut context_count = 0;
    for f in &diff.file_diffs {
        for h in &f.hunks {
            for l in &h.lines {
                match l.tag {
                    LineTag::Added => added.push(format!("{}:{}", f.path(), l.text)),
                    LineTag::Removed => removed.push(format!("{}:{}", f.path(), l.text)),
                    LineTag::Context => context_count += 1,
                }
            }
        }
    }
    added.sort();
    removed.sort();
    (added, removed, context_count)
}

#[test]
fn edited_lines_do_not_depend_on_context_width() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture::three_commit_repo(dir.path()).unwrap();
    let repo = Repo::open(&fx.root).unwrap();
    for (_, commit) in &fx.commits {
        let (a9, r9, c9) = edits(&repo, commit, DEFAULT_CONTEXT_LINES);
        for width in [0, 1, 3, 20] {
            let (a, r, c) = edits(&repo, commit, width);
            assert_eq!((&a, &r), (&a9, &r9), "width {width}");
            if width < DEFAULT_CONTEXT_LINES {
                assert!(c <= c9);
            }
        }
    }
}

#[test]
fn default_width_carries_nine_lines_of_context() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture::three_commit_repo(dir.path()).unwrap();
    let repo = Repo::open(&fx.root).unwrap();
    let diff = produce_diff(&repo, fx.commit("C").unwrap(), DEFAULT_CONTEXT_LINES).unwrap();
    let hunk = &diff.file_diffs[0].hunks[0];
    let lead = hunk.lines.iter().take_while(|l| l.tag == LineTag::Context).count();
    let trail = hunk.lines.iter().rev().take_while(|l| l.tag == LineTag::Context).count();
    // `subtract` sits on line 10 of a 41-line file: nine lines either side fit.
    assert_eq!((lead, trail), (9, 9));
    assert_eq!(hunk.old_start, 1);
}
