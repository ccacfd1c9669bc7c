//! Generators and brute-force references shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;

use testmaint::dataset::TestId;
use testmaint::diff::{ChangeKind, CommitDiff, DiffLine, FileDiff, Hunk, LineTag, NULL_PATH};

fn path_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec("[A-Za-z0-9_][A-Za-z0-9_. -]{0,7}[A-Za-z0-9_]", 1..4).prop_map(|parts| parts.join("/"))
}

fn text_strategy() -> impl Strategy<Value = String> {
    // Anything printable except line breaks, including diff-like prefixes.
    prop_oneof![
        "[^\r\n]{0,30}",
        Just(String::new()),
        Just("diff --git a/x b/x".to_string()),
        Just("@@ -1 +1 @@".to_string()),
        Just("--- a/y".to_string()),
    ]
}

fn tag_strategy() -> impl Strategy<Value = LineTag> {
    prop_oneof![Just(LineTag::Context), Just(LineTag::Added), Just(LineTag::Removed)]
}

fn hunk_from(lines: Vec<(LineTag, String)>, old_start: u32, new_start: u32, section: String) -> Hunk {
    let lines: Vec<DiffLine> = lines.into_iter().map(|(t, s)| DiffLine::new(t, s)).collect();
    let mut h = Hunk { old_start, old_len: 0, new_start, new_len: 0, section, lines };
    h.old_len = h.counted_old();
    h.new_len = h.counted_new();
    if h.old_len == 0 {
        h.old_start = h.old_start.saturating_sub(1);
    }
    if h.new_len == 0 {
        h.new_start = h.new_start.saturating_sub(1);
    }
    h
}

fn hunk_strategy(only: Option<LineTag>) -> impl Strategy<Value = Hunk> {
    let tag = match only {
        Some(t) => Just(t).boxed(),
        None => tag_strategy().boxed(),
    };
    (
        prop::collection::vec((tag, text_strategy()), 1..12),
        1u32..500,
        1u32..500,
        prop_oneof![Just(String::new()), "[a-z (){}]{1,20}"],
        any::<bool>(),
    )
        .prop_map(move |(lines, old_start, new_start, section, no_newline)| {
            let (old_start, new_start) = match only {
                Some(LineTag::Added) => (1, 1),
                Some(LineTag::Removed) => (1, 1),
                _ => (old_start, new_start),
            };
            let mut h = hunk_from(lines, old_start, new_start, section);
            if no_newline {
                h.lines.last_mut().unwrap().no_newline = true;
            }
            h
        })
}

fn file_strategy() -> impl Strategy<Value = FileDiff> {
    let modified = (path_strategy(), prop::collection::vec(hunk_strategy(None), 1..4)).prop_map(|(p, hunks)| {
        FileDiff { old_path: p.clone(), new_path: p, kind: ChangeKind::Modified, hunks, textual: true }
    });
    let added = (path_strategy(), hunk_strategy(Some(LineTag::Added))).prop_map(|(p, h)| FileDiff {
        old_path: NULL_PATH.into(),
        new_path: p,
        kind: ChangeKind::Added,
        hunks: vec![h],
        textual: true,
    });
    let deleted = (path_strategy(), hunk_strategy(Some(LineTag::Removed))).prop_map(|(p, h)| FileDiff {
        old_path: p,
        new_path: NULL_PATH.into(),
        kind: ChangeKind::Deleted,
        hunks: vec![h],
        textual: true,
    });
    let renamed = (path_strategy(), path_strategy(), prop::collection::vec(hunk_strategy(None), 0..3)).prop_map(
        |(a, b, hunks)| {
            let textual = !hunks.is_empty();
            FileDiff { old_path: a, new_path: format!("{b}.moved"), kind: ChangeKind::Renamed, hunks, textual }
        },
    );
    let binary = path_strategy().prop_map(|p| FileDiff {
        old_path: p.clone(),
        new_path: p,
        kind: ChangeKind::Modified,
        hunks: Vec::new(),
        textual: false,
    });
    prop_oneof![4 => modified, 1 => added, 1 => deleted, 1 => renamed, 1 => binary]
}

/// Well-formed commit diffs in the form the parser returns them.
pub fn commit_diff_strategy() -> impl Strategy<Value = CommitDiff> {
    prop::collection::vec(file_strategy(), 0..5).prop_map(|file_diffs| CommitDiff {
        commit_id: String::new(),
        file_diffs,
        context_lines: 0,
    })
}

/// Random (suggested, ground truth, universe) triples with both sets
/// inside the universe.
pub fn outcome_sets_strategy() -> impl Strategy<Value = (BTreeSet<TestId>, BTreeSet<TestId>, BTreeSet<TestId>)> {
    (1usize..60).prop_flat_map(|n| {
        (prop::collection::vec((any::<bool>(), any::<bool>()), n)).prop_map(move |flags| {
            let mut s = BTreeSet::new();
            let mut g = BTreeSet::new();
            let mut u = BTreeSet::new();
            for (i, (in_s, in_g)) in flags.into_iter().enumerate() {
                let id = TestId::new(format!("t/F{}.java", i % 7), format!("F{}", i % 7), format!("test{i}"));
                if in_s {
                    s.insert(id.clone());
                }
                if in_g {
                    g.insert(id.clone());
                }
                u.insert(id);
            }
            (s, g, u)
        })
    })
}

/// Confusion counts by walking the universe one test at a time.
pub fn brute_force_counts(s: &BTreeSet<TestId>, g: &BTreeSet<TestId>, u: &BTreeSet<TestId>) -> (u64, u64, u64, u64) {
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for t in u {
        match (s.contains(t), g.contains(t)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, tn, fp, fn_)
}

/// Metrics from raw counts, written out independently of the library.
pub fn reference_metrics(tp: u64, tn: u64, fp: u64, fn_: u64) -> [Option<f64>; 5] {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let div = |a: f64, b: f64| if b == 0.0 { None } else { Some(a / b) };
    let accuracy = div(tp + tn, tp + tn + fp + fn_);
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f = |beta2: f64| match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some((1.0 + beta2) * p * r / (beta2 * p + r)),
        _ => None,
    };
    [accuracy, recall, precision, f(1.0), f(4.0)]
}

/// Cosine ranking by full sort, written independently of the index.
pub fn brute_force_ranking(docs: &[(TestId, Vec<f32>)], query: &[f32], k: usize) -> Vec<(TestId, f64)> {
    let dot = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum::<f64>();
    let qn = dot(query, query).sqrt();
    let mut scored: Vec<(TestId, f64)> = docs
        .iter()
        .map(|(id, v)| {
            let s = dot(v, query) / (dot(v, v).sqrt() * qn);
            (id.clone(), s.clamp(-1.0, 1.0))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}
