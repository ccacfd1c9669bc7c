// Each example is compiled in as a module so its `run` can be checked.
#![allow(dead_code)]

#[path = "../examples/evaluate_dataset.rs"]
mod evaluate_dataset;
#[path = "../examples/mine_dataset.rs"]
mod mine_dataset;
#[path = "../examples/parse_diff.rs"]
mod parse_diff;
#[path = "../examples/predict_change.rs"]
mod predict_change;
#[path = "../examples/react_agent.rs"]
mod react_agent;
#[path = "../examples/retrieve_tests.rs"]
mod retrieve_tests;

#[test]
fn parse_diff_runs() {
    let out = parse_diff::run().unwrap();
    assert!(out.starts_with("2 files, 2 source changes"), "{out}");
    assert!(out.contains("Calc.java#1 +1 -0"));
}

#[test]
fn mine_dataset_runs() {
    let out = mine_dataset::run().unwrap();
    assert!(out.contains("Changed: 2 changes, 1 of 6 tests affected"), "{out}");
    assert!(out.contains("Unchanged: 1 changes"));
}

#[test]
fn retrieve_tests_runs() {
    let out = retrieve_tests::run().unwrap();
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().next().unwrap().ends_with("testDivideByZero"), "{out}");
}

#[test]
fn react_agent_runs() {
    let out = react_agent::run().unwrap();
    assert!(out.ends_with("answer: the timeout is 300 seconds\n"), "{out}");
}

#[test]
fn predict_change_runs() {
    let out = predict_change::run().unwrap();
    assert!(out.contains("testAdd"), "{out}");
}

#[test]
fn evaluate_dataset_runs() {
    let out = evaluate_dataset::run().unwrap();
    assert!(out.contains("Mean of 2 trial(s)"), "{out}");
}
