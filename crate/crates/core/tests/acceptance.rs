//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};

use testmaint::agents::{
    build_suggestions, extract_test_names, parse_verdict, run_react, AgentSpec, Deadline, LlmTestSummarizer, Outcome,
    Pipeline, PipelineConfig, ReactError, Stance, Tool,
};
use testmaint::dataset::{
    build_dataset, write_dataset, BuildOptions, CommitRange, Dataset, Subset, TestConventions, TestId,
};
use testmaint::dataset::{LineSpan, TestCase};
use testmaint::diff::{
    parse_unified_diff, produce_diff, render_commit_diff, LineTag, PathRules, DEFAULT_CONTEXT_LINES,
};
use testmaint::eval::{
    classify_outcomes, compute_metrics, evaluate_dataset, ConfusionCounts, EvalOptions, EvaluationRun, IndexSource,
    RepoIndexSource,
};
use testmaint::fixture::{self, FixtureRepo, OraclePolicy, CALCULATOR_TEST_PATH};
use testmaint::git::Repo;
use testmaint::llm::{HashEmbedder, ScriptedProvider, ScriptedReply};
use testmaint::retrieval::{build_index, retrieve_top_k, IndexMode, VectorIndex};

struct Fixture {
    _dir: tempfile::TempDir,
    fx: FixtureRepo,
    repo: Repo,
    dataset: Dataset,
}

fn three_commit() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture::three_commit_repo(dir.path()).unwrap();
    let repo = Repo::open(&fx.root).unwrap();
    let dataset = build_dataset(&repo, &build_options(&fx, DEFAULT_CONTEXT_LINES)).unwrap();
    Fixture { _dir: dir, fx, repo, dataset }
}

fn build_options(fx: &FixtureRepo, context: u32) -> BuildOptions {
    BuildOptions {
        range: CommitRange { from: Some(fx.base.clone()), to: fx.head().into() },
        context_lines: context,
        rules: PathRules::default(),
        conventions: TestConventions::default(),
    }
}

fn evaluate(f: &Fixture, chat: &ScriptedProvider, mode: IndexMode) -> EvaluationRun {
    let embedder = HashEmbedder::new(128);
    let rules = PathRules::default();
    let conventions = TestConventions::default();
    let summarizer = LlmTestSummarizer::new(chat, Duration::from_secs(5));
    let indexes = RepoIndexSource {
        repo: &f.repo,
        rules: &rules,
        conventions: &conventions,
        mode,
        embedder: &embedder,
        summarizer: Some(&summarizer),
        cache: None,
    };
    let pipeline = Pipeline::new(chat, &embedder, PipelineConfig::default());
    evaluate_dataset(&f.dataset, &pipeline, &indexes, &EvalOptions { mode, ..Default::default() })
}

fn proptest_cases<S, F>(cases: u32, strategy: S, test: F)
where
    S: proptest::strategy::Strategy,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let mut runner = TestRunner::new(PropConfig { cases, failure_persistence: None, ..PropConfig::default() });
    if let Err(e) = runner.run(&strategy, test) {
        panic!("{e}");
    }
}

fn c1_reference_scores() {
    let c = ConfusionCounts { tp: 1859, tn: 0, fp: 4901, fn_: 891 };
    let m = compute_metrics(&c);
    // Closed forms: F1 = 2tp/(2tp+fp+fn), F2 = 5tp/(5tp+4fn+fp).
    let f1 = 2.0 * 1859.0 / (2.0 * 1859.0 + 4901.0 + 891.0);
    let f2 = 5.0 * 1859.0 / (5.0 * 1859.0 + 4.0 * 891.0 + 4901.0);
    assert!((m.f1.unwrap() - 0.391).abs() <= 0.001, "f1 {:?}", m.f1);
    assert!((m.f2.unwrap() - 0.523).abs() <= 0.001, "f2 {:?}", m.f2);
    assert!((m.f1.unwrap() - f1).abs() < 1e-12 && (m.f2.unwrap() - f2).abs() < 1e-12);
}

fn c2_confusion_property() {
    proptest_cases(1000, common::outcome_sets_strategy(), |(s, g, u)| {
        let c = classify_outcomes(&s, &g, &u).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let (tp, tn, fp, fn_) = common::brute_force_counts(&s, &g, &u);
        if c != (ConfusionCounts { tp, tn, fp, fn_ }) || c.total() != u.len() as u64 {
            return Err(TestCaseError::fail(format!("{c:?}")));
        }
        let m = compute_metrics(&c);
        let want = common::reference_metrics(tp, tn, fp, fn_);
        let got = [m.accuracy, m.recall, m.precision, m.f1, m.f2];
        for (g, w) in got.iter().zip(want) {
            let same = match (g, w) {
                (None, None) => true,
                (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                _ => false,
            };
            if !same {
                return Err(TestCaseError::fail(format!("{got:?} vs {want:?}")));
            }
        }
        Ok(())
    });
}

fn c3_retrieval_exactness() {
    use proptest::prelude::*;
    const WORDS: &[&str] = &["assert", "parse", "config", "load", "user", "cache", "divide", "add", "null", "retry"];
    let sentence = prop::collection::vec(prop::sample::select(WORDS), 1..8).prop_map(|w| w.join(" "));
    let strategy = (prop::collection::vec(sentence.clone(), 5..=200), sentence);
    let embedder = HashEmbedder::new(64);
    proptest_cases(100, strategy, |(bodies, query)| {
        let tests: Vec<TestCase> = bodies
            .iter()
            .enumerate()
            .map(|(i, b)| TestCase {
                id: TestId::new("T.java", "T", format!("t{:03}", 999 - i)),
                body: b.clone(),
                span: LineSpan { start: 1, end: 1 },
                commit_id: "c".into(),
            })
            .collect();
        let index = build_index("c", &tests, IndexMode::RawCode, &embedder, None).unwrap();
        let docs: Vec<_> = tests.iter().map(|t| (t.id.clone(), embedder.embed_one(&t.body).values)).collect();
        let q = embedder.embed_one(&query).values;
        for k in [1, 5, tests.len() + 5] {
            let got = retrieve_top_k(&index, &query, k, &embedder).unwrap();
            let want = common::brute_force_ranking(&docs, &q, k);
            let ok = got.len() == want.len()
                && got.iter().zip(&want).all(|(g, (id, s))| &g.test_id == id && (g.score - s).abs() < 1e-9);
            if !ok {
                return Err(TestCaseError::fail(format!("k={k}")));
            }
        }
        Ok(())
    });
}

fn c4_react_contract() {
    let spec = AgentSpec::new("probe", "You answer questions.");

    // (a) immediate answer: one iteration, no observation.
    let p = ScriptedProvider::with_queue(["Thought: known\nFinal Answer: 4"]);
    let (answer, t) = run_react(&spec, "2+2?", &p, &mut [], Deadline::default()).unwrap();
    assert_eq!((answer.as_str(), t.consumed_iterations(), t.steps.len()), ("4", 1, 1));
    assert!(t.steps[0].observation.is_none());

    // (b) tool call: observation fed back before the answer.
    let p = ScriptedProvider::with_queue(["Action: lookup\nAction Input: x", "Final Answer: x is 1"]);
    let mut tools = [Tool::new("lookup", "looks up", |i: &str| Ok(format!("{i}=1")))];
    let (_, t) = run_react(&spec, "x?", &p, &mut tools, Deadline::default()).unwrap();
    assert_eq!(t.steps[0].observation.as_deref(), Some("x=1"));
    assert!(p.transcript()[1].messages.iter().any(|m| m.content == "Observation: x=1"));

    // (c) malformed replies: reminders consume iterations, third one ends the run.
    let p = ScriptedProvider::with_queue(["hmm", "nope", "still no"]);
    let err = run_react(&spec, "?", &p, &mut [], Deadline::default()).unwrap_err();
    assert!(matches!(err, ReactError::IterationLimit(_)));
    assert_eq!(err.transcript().consumed_iterations(), 3);
    assert_eq!(err.transcript().outcome, Outcome::IterationLimit);

    // (d) stalled provider: timeout well within budget.
    let p = ScriptedProvider::new();
    p.push(ScriptedReply::Stall);
    let started = Instant::now();
    let err = run_react(&spec.clone().with_limits(3, Duration::from_millis(50)), "?", &p, &mut [], Deadline::default())
        .unwrap_err();
    assert!(matches!(err, ReactError::Timeout(_)));
    assert!(started.elapsed() < Duration::from_millis(500));
}

fn c5_end_to_end_oracle() {
    let f = three_commit();
    let chat = fixture::oracle_provider(&f.dataset, OraclePolicy::Exact).unwrap();
    let run = evaluate(&f, &chat, IndexMode::RawCode);
    for t in &run.trials {
        assert!(t.failures.is_empty(), "{:?}", t.failures);
        assert_eq!(t.changed.summary.micro.recall, Some(1.0));
        assert_eq!(t.changed.summary.micro.precision, Some(1.0));
        assert_eq!(t.unchanged.summary.micro.accuracy, Some(1.0));
    }
    let chat = fixture::oracle_provider(&f.dataset, OraclePolicy::AlwaysNegative).unwrap();
    let run = evaluate(&f, &chat, IndexMode::RawCode);
    assert_eq!(run.trials[0].changed.summary.micro.recall, Some(0.0));
    assert_eq!(run.trials[0].unchanged.summary.avg_fp_per_commit, Some(0.0));
}

fn c6_mining() {
    let f = three_commit();
    let ids: Vec<&str> = f.dataset.records.iter().map(|r| r.commit_id.as_str()).collect();
    assert_eq!(ids, [f.fx.commit("A").unwrap(), f.fx.commit("C").unwrap()]);
    let a = &f.dataset.records[0];
    assert_eq!(a.subset, Subset::Changed);
    assert_eq!(a.changes.len(), 2);
    let gt: BTreeSet<TestId> = [TestId::new(CALCULATOR_TEST_PATH, "CalculatorTest", "testAdd")].into();
    assert_eq!(a.ground_truth, gt);
    assert_eq!(f.dataset.records[1].subset, Subset::Unchanged);
    assert_eq!(f.dataset.manifest.exclusions.commits_without_source_changes, 1);

    let again = build_dataset(&f.repo, &build_options(&f.fx, DEFAULT_CONTEXT_LINES)).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    write_dataset(&f.dataset, &mut x).unwrap();
    write_dataset(&again, &mut y).unwrap();
    assert_eq!(x, y);
}

fn c7_diff_fidelity() {
    proptest_cases(500, common::commit_diff_strategy(), |diff| {
        let text = render_commit_diff(&diff);
        let parsed = parse_unified_diff(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
        if parsed != diff {
            return Err(TestCaseError::fail(text));
        }
        Ok(())
    });
    assert_eq!(DEFAULT_CONTEXT_LINES, 9);
    let f = three_commit();
    for (_, sha) in &f.fx.commits {
        let edits = |ctx| {
            let d = produce_diff(&f.repo, sha, ctx).unwrap();
            let mut v: Vec<(LineTag, String)> = d
                .file_diffs
                .iter()
                .flat_map(|fd| fd.hunks.iter().flat_map(|h| &h.lines))
                .filter(|l| l.tag != LineTag::Context)
                .map(|l| (l.tag, l.text.clone()))
                .collect();
            v.sort_by(|a, b| (a.0 as u8, &a.1).cmp(&(b.0 as u8, &b.1)));
            v
        };
        assert_eq!(edits(3), edits(9));
    }
}

fn c8_answer_texts() {
    let universe: BTreeSet<TestId> = ["testParameters", "testConfigLoads", "testRunFlow"]
        .iter()
        .map(|m| TestId::new("src/test/FlowConfigTest.java", "FlowConfigTest", *m))
        .collect();
    let index = VectorIndex {
        commit_id: "c".into(),
        mode: IndexMode::RawCode,
        provider_fingerprint: "none".into(),
        documents: Vec::new(),
        warnings: Vec::new(),
    };
    let suggestions = |answer: &str| {
        let names = extract_test_names(answer, &universe);
        build_suggestions(answer, &names, &index, &universe)
    };

    let listed = "Based on the provided information, the following test cases need maintenance:\n\n\
        1. `testParameters()`: This test case needs to be updated to include the new parameter.\n\
        2. `testConfigLoads()`: This test case might need to be updated to verify the new configuration \
        is loaded correctly.";
    let named: BTreeSet<String> = extract_test_names(listed, &universe).ids().into_iter().map(|t| t.method).collect();
    assert_eq!(named, BTreeSet::from(["testParameters".to_string(), "testConfigLoads".to_string()]));
    assert!(suggestions(listed).iter().all(|s| s.stance == Stance::NeedsUpdate));

    let negative = "NO. No test maintenance is needed. The change only renames a local variable and \
        does not affect behavior.";
    let verdict = parse_verdict(negative).unwrap();
    assert!(!verdict.needed);
    assert!(extract_test_names(negative, &universe).ids().is_empty());
    assert!(suggestions(negative).is_empty());

    let review = "While no specific test cases were identified as needing updates based on the provided \
        information, it is recommended to review and potentially update any test cases that interact with \
        the `FlowConfig` class.";
    let s = suggestions(review);
    assert!(!s.is_empty() && s.iter().all(|x| x.stance == Stance::ShouldReview), "{s:?}");

    let create = "No existing test cases are directly impacted by this change, but new test cases should be \
        created to cover the updated behavior of the `getNextTransformation` method.";
    let s = suggestions(create);
    assert_eq!(s.len(), 1);
    assert_eq!((s[0].stance, s[0].test_id.is_none()), (Stance::SuggestNew, true));
}

fn c9_determinism() {
    let f = three_commit();
    let json = |run: &EvaluationRun| serde_json::to_string(run).unwrap();
    let chat = fixture::oracle_provider(&f.dataset, OraclePolicy::OneFalsePositive).unwrap();
    let first = evaluate(&f, &chat, IndexMode::Summary);
    assert_eq!(first.trials.len(), 2);
    let strip = |t: &testmaint::eval::TrialReport| {
        let mut v = serde_json::to_value(t).unwrap();
        v.as_object_mut().unwrap().remove("trial");
        v
    };
    assert_eq!(strip(&first.trials[0]), strip(&first.trials[1]));
    let chat = fixture::oracle_provider(&f.dataset, OraclePolicy::OneFalsePositive).unwrap();
    let second = evaluate(&f, &chat, IndexMode::Summary);
    assert_eq!(json(&first), json(&second));
}

fn c10_latency() {
    let f = three_commit();
    let chat = fixture::oracle_provider(&f.dataset, OraclePolicy::Exact).unwrap();
    let embedder = HashEmbedder::new(128);
    let rules = PathRules::default();
    let conventions = TestConventions::default();
    let indexes = RepoIndexSource {
        repo: &f.repo,
        rules: &rules,
        conventions: &conventions,
        mode: IndexMode::RawCode,
        embedder: &embedder,
        summarizer: None,
        cache: None,
    };
    let record = &f.dataset.records[0];
    let index = indexes.index_for(&record.commit_id).unwrap();
    let pipeline = Pipeline::new(&chat, &embedder, PipelineConfig::default());
    let started = Instant::now();
    let p = pipeline.predict(&record.changes[0], &index).unwrap();
    let elapsed = started.elapsed();
    assert!(!p.suggestions.is_empty());
    assert!(elapsed < Duration::from_secs(1), "{elapsed:?}");
}

fn main() {
    let criteria: [(&str, fn()); 10] = [
        ("F1 and F2 from fixed confusion counts", c1_reference_scores),
        ("confusion counts and metrics match brute force (1000 cases)", c2_confusion_property),
        ("top-k retrieval equals brute-force cosine ranking (100 corpora)", c3_retrieval_exactness),
        ("ReAct loop contract", c4_react_contract),
        ("end-to-end oracle and negative runs on the fixture repo", c5_end_to_end_oracle),
        ("mining correctness and byte-identical rebuild", c6_mining),
        ("diff round trip (500 cases), default context, width invariance", c7_diff_fidelity),
        ("answer texts: named list, negative, review, new-test", c8_answer_texts),
        ("deterministic trials and reports", c9_determinism),
        ("single-change prediction under one second", c10_latency),
    ];
    panic::set_hook(Box::new(|info| eprintln!("  {info}")));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let ok = panic::catch_unwind(AssertUnwindSafe(check)).is_ok();
        if !ok {
            failed += 1;
        }
        println!("{} {}: {name}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
