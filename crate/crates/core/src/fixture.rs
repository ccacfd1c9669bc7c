//! Small generated git repositories with known histories, plus scripted
//! model replies that answer from a dataset's ground truth. Used by the
//! examples and tests; handy for trying the tool without a model server.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::json;

use crate::agents::prompts::{DECIDER_TAG, LOCALIZER_TAG, SUMMARIZER_TAG, TEST_SUMMARIZER_TAG};
use crate::dataset::{Dataset, Subset, TestId};
use crate::llm::{ScriptError, ScriptedProvider};

#[derive(Debug, thiserror::Error)]
#[error("fixture setup failed: {0}")]
pub struct FixtureError(String);

/// A generated repository. `commits` lists the commits after `base`, in
/// order, with a short label each.
#[derive(Debug, Clone)]
pub struct FixtureRepo {
    pub root: PathBuf,
    pub base: String,
    pub commits: Vec<(String, String)>,
}

impl FixtureRepo {
    pub fn head(&self) -> &str {
        self.commits.last().map_or(&self.base, |(_, id)| id)
    }

    pub fn commit(&self, label: &str) -> Option<&str> {
        self.commits.iter().find(|(l, _)| l == label).map(|(_, id)| id.as_str())
    }
}

const EPOCH: u64 = 1_704_067_200;

fn git(root: &Path, args: &[&str], tick: u64) -> Result<String, FixtureError> {
    let date = format!("@{} +0000", EPOCH + tick * 60);
    let out = Command::new("git")
        .arg("-C")
        .arg(root)
        .args(["-c", "user.name=Fixture", "-c", "user.email=fixture@example.com"])
        .args(["-c", "commit.gpgsign=false", "-c", "init.defaultBranch=main", "-c", "core.autocrlf=false"])
        .args(args)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_AUTHOR_DATE", &date)
        .env("GIT_COMMITTER_DATE", &date)
        .env("LC_ALL", "C")
        .output()
        .map_err(|e| FixtureError(format!("cannot run git: {e}")))?;
    if !out.status.success() {
        return Err(FixtureError(format!("git {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))));
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

struct Builder {
    root: PathBuf,
    tick: u64,
}

impl Builder {
    fn init(root: &Path) -> Result<Self, FixtureError> {
        std::fs::create_dir_all(root).map_err(|e| FixtureError(e.to_string()))?;
        git(root, &["init", "-q"], 0)?;
        Ok(Self { root: root.to_path_buf(), tick: 0 })
    }

    fn write(&self, path: &str, text: &str) -> Result<(), FixtureError> {
        let full = self.root.join(path);
        if let Some(dir) = full.parent() {
            std::fs::create_dir_all(dir).map_err(|e| FixtureError(e.to_string()))?;
        }
        std::fs::write(&full, text).map_err(|e| FixtureError(format!("{}: {e}", full.display())))
    }

    fn commit(&mut self, message: &str) -> Result<String, FixtureError> {
        self.tick += 1;
        git(&self.root, &["add", "-A"], self.tick)?;
        git(&self.root, &["commit", "-q", "-m", message], self.tick)?;
        git(&self.root, &["rev-parse", "HEAD"], self.tick)
    }
}

const CALCULATOR: &str = "package com.example;

/** Integer arithmetic. */
public class Calculator {
    public int add(int a, int b) {
        return a + b;
    }

    public int subtract(int a, int b) {
        return a - b;
    }

    public int multiply(int a, int b) {
        return a * b;
    }

    public int negate(int a) {
        return -a;
    }

    public int abs(int a) {
        return a < 0 ? -a : a;
    }

    public int max(int a, int b) {
        return a > b ? a : b;
    }

    public int min(int a, int b) {
        return a < b ? a : b;
    }

    public int square(int a) {
        return a * a;
    }

    public int divide(int a, int b) {
        return a / b;
    }
}
";

const CALCULATOR_TEST: &str = "package com.example;

import static org.junit.Assert.assertEquals;

import org.junit.Test;

public class CalculatorTest {
    private final Calculator calc = new Calculator();

    @Test
    public void testAdd() {
        assertEquals(4, calc.add(2, 2));
    }

    @Test
    public void testSubtract() {
        assertEquals(0, calc.subtract(2, 2));
    }

    @Test
    public void testMultiply() {
        assertEquals(6, calc.multiply(2, 3));
    }

    @Test
    public void testNegate() {
        assertEquals(-2, calc.negate(2));
    }

    @Test
    public void testDivide() {
        assertEquals(2, calc.divide(7, 3));
    }

    @Test
    public void testMax() {
        assertEquals(3, calc.max(2, 3));
    }

    private static int[] samples() {
        return new int[] {1, 2, 3};
    }
}
";

pub const CALCULATOR_PATH: &str = "src/main/java/com/example/Calculator.java";
pub const CALCULATOR_TEST_PATH: &str = "src/test/java/com/example/CalculatorTest.java";

/// Three commits on top of a base commit:
///
/// * `A` changes `add` and `divide` and the body of `testAdd`, and also
///   edits the `samples()` helper in the test class;
/// * `B` edits only the `samples()` helper;
/// * `C` changes `subtract` and no test.
pub fn three_commit_repo(root: &Path) -> Result<FixtureRepo, FixtureError> {
    let mut b = Builder::init(root)?;
    b.write("README.md", "Calculator example.\n")?;
    b.write(CALCULATOR_PATH, CALCULATOR)?;
    b.write(CALCULATOR_TEST_PATH, CALCULATOR_TEST)?;
    let base = b.commit("Add calculator")?;

    let calc_a = CALCULATOR
        .replace("return a + b;", "return Math.addExact(a, b);")
        .replace("return a / b;", "return Math.floorDiv(a, b);");
    let test_a = CALCULATOR_TEST
        .replace("assertEquals(4, calc.add(2, 2));", "assertEquals(5, calc.add(2, 3));")
        .replace("{1, 2, 3}", "{1, 2, 3, 4}");
    b.write(CALCULATOR_PATH, &calc_a)?;
    b.write(CALCULATOR_TEST_PATH, &test_a)?;
    let a = b.commit("Use exact addition and floor division")?;

    let test_b = test_a.replace("{1, 2, 3, 4}", "{1, 2, 3, 4, 5}");
    b.write(CALCULATOR_TEST_PATH, &test_b)?;
    let c_b = b.commit("Extend test samples")?;

    let calc_c = calc_a.replace("return a - b;", "return Math.subtractExact(a, b);");
    b.write(CALCULATOR_PATH, &calc_c)?;
    let c = b.commit("Use exact subtraction")?;

    Ok(FixtureRepo {
        root: root.to_path_buf(),
        base,
        commits: vec![("A".into(), a), ("B".into(), c_b), ("C".into(), c)],
    })
}

/// Shape of the benchmark history.
pub mod benchmark {
    /// (number of commits, hunks per commit) for commits with test updates.
    pub const CHANGED: [(usize, usize); 2] = [(23, 17), (9, 16)];
    /// The same for commits without test updates.
    pub const UNCHANGED: [(usize, usize); 2] = [(11, 5), (11, 4)];
    /// Test-only commits, which mining must skip.
    pub const TEST_ONLY: usize = 3;
    pub const COMMITS: usize = 54;
    pub const CHANGES: usize = 634;
}

const SITES: usize = 20;
const SITE_GAP: usize = 30;
const BENCH_TESTS: usize = 40;

fn engine_source(values: &[usize]) -> String {
    let mut s = String::from("package bench;\n\n/** Tuning constants. */\npublic final class Engine {\n");
    for line in 0..SITES * SITE_GAP {
        if line % SITE_GAP == SITE_GAP / 2 {
            let site = line / SITE_GAP;
            let _ = writeln!(s, "    public static final int V{site} = {};", values[site]);
        } else {
            let _ = writeln!(s, "    // slot {line}");
        }
    }
    s.push_str("}\n");
    s
}

fn bench_test_source(expected: &[usize], helper: usize) -> String {
    let mut s = String::from("package bench;\n\nimport static org.junit.Assert.assertEquals;\n\nimport org.junit.Test;\n\npublic class EngineTest {\n");
    for (i, value) in expected.iter().enumerate() {
        let _ = write!(
            s,
            "    @Test\n    public void testSite{i}() {{\n        assertEquals({value}, Engine.V{});\n    }}\n\n",
            i % SITES
        );
    }
    let _ = write!(s, "    static int helper() {{\n        return {helper};\n    }}\n}}\n");
    s
}

/// A 57-commit history that mines to 54 records with 634 code changes:
/// 32 commits update a test (23 with 17 hunks, 9 with 16) and 22 do not
/// (11 with 5 hunks, 11 with 4). Three more commits touch only test helper
/// code and are skipped.
pub fn benchmark_repo(root: &Path) -> Result<FixtureRepo, FixtureError> {
    let mut kinds: Vec<(bool, usize)> = Vec::new();
    for (changed, groups) in [(true, benchmark::CHANGED), (false, benchmark::UNCHANGED)] {
        for (count, hunks) in groups {
            kinds.extend(std::iter::repeat_n((changed, hunks), count));
        }
    }
    // Interleave deterministically; 7 is coprime with 54.
    let order: Vec<(bool, usize)> = (0..kinds.len()).map(|k| kinds[(k * 7) % kinds.len()]).collect();

    let mut b = Builder::init(root)?;
    let mut values = vec![0usize; SITES];
    let mut expected = vec![0usize; BENCH_TESTS];
    let mut helper = 0;
    b.write("src/main/java/bench/Engine.java", &engine_source(&values))?;
    b.write("src/test/java/bench/EngineTest.java", &bench_test_source(&expected, helper))?;
    let base = b.commit("Initial engine")?;

    let mut commits = Vec::new();
    let mut test_only_left = benchmark::TEST_ONLY;
    for (k, (changed, hunks)) in order.into_iter().enumerate() {
        let stamp = k + 1;
        for site in values.iter_mut().take(hunks) {
            *site = stamp * 100 + hunks;
        }
        b.write("src/main/java/bench/Engine.java", &engine_source(&values))?;
        if changed {
            expected[k % BENCH_TESTS] = stamp;
            b.write("src/test/java/bench/EngineTest.java", &bench_test_source(&expected, helper))?;
        }
        let id = b.commit(&format!("Retune {hunks} constants"))?;
        commits.push((format!("{}{stamp}", if changed { "changed-" } else { "unchanged-" }), id));

        if test_only_left > 0 && stamp % 18 == 0 {
            test_only_left -= 1;
            helper += 1;
            b.write("src/test/java/bench/EngineTest.java", &bench_test_source(&expected, helper))?;
            let id = b.commit("Adjust test helper")?;
            commits.push((format!("test-only-{helper}"), id));
        }
    }
    Ok(FixtureRepo { root: root.to_path_buf(), base, commits })
}

/// How scripted replies relate to the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OraclePolicy {
    /// Every change of a Changed commit names exactly its ground truth;
    /// Unchanged commits are declined.
    Exact,
    /// Every change is declined.
    AlwaysNegative,
    /// Like `Exact`, but each Unchanged commit names one test outside its
    /// ground truth (the first test of its universe).
    OneFalsePositive,
}

fn test_list(tests: &[&TestId]) -> String {
    let mut s = String::from("Thought: The retrieved candidates show which tests exercise the change.\nFinal Answer: The following test cases require maintenance due to the code changes:\n\n");
    for (i, t) in tests.iter().enumerate() {
        let _ = writeln!(
            s,
            "{}. `{}.{}()`: Needs to be updated to reflect the changed behaviour.",
            i + 1,
            t.container,
            t.method
        );
    }
    s
}

/// `(pattern, reply)` rules answering every change in `dataset`. Each rule
/// keys on a role tag plus the change's rendered hunk, which the prompts
/// quote verbatim.
pub fn oracle_rules(dataset: &Dataset, policy: OraclePolicy) -> Vec<(String, String)> {
    let mut rules = Vec::new();
    for record in &dataset.records {
        let positives: Vec<&TestId> = match (policy, record.subset) {
            (OraclePolicy::AlwaysNegative, _) => Vec::new(),
            (_, Subset::Changed) => record.ground_truth.iter().collect(),
            (OraclePolicy::OneFalsePositive, Subset::Unchanged) => record.universe.iter().take(1).collect(),
            (OraclePolicy::Exact, Subset::Unchanged) => Vec::new(),
        };
        for change in &record.changes {
            let anchor = regex::escape(&change.rendered_text);
            let summary = format!(
                "Thought: The hunk is small.\nFinal Answer: Edits {} at hunk {} of commit {}.",
                change.file_path,
                change.hunk_index,
                &record.commit_id[..record.commit_id.len().min(12)]
            );
            rules.push((format!(r"(?s)^{}.*{anchor}", regex::escape(SUMMARIZER_TAG)), summary));
            let verdict = if positives.is_empty() {
                "NO\nExplanation: The change does not affect behaviour covered by existing tests.".to_string()
            } else {
                "YES\nExplanation: Tested behaviour changes.".to_string()
            };
            rules.push((format!(r"(?s)^{}.*{anchor}", regex::escape(DECIDER_TAG)), verdict));
            if !positives.is_empty() {
                rules.push((format!(r"(?s)^{}.*{anchor}", regex::escape(LOCALIZER_TAG)), test_list(&positives)));
            }
        }
    }
    rules.push((
        format!("^{}", regex::escape(TEST_SUMMARIZER_TAG)),
        "Checks one arithmetic result of the class under test.".to_string(),
    ));
    rules
}

pub fn oracle_provider(dataset: &Dataset, policy: OraclePolicy) -> Result<ScriptedProvider, ScriptError> {
    oracle_rules(dataset, policy)
        .into_iter()
        .try_fold(ScriptedProvider::new(), |p, (pattern, reply)| p.rule(&pattern, reply))
}

/// Writes `rules` as a script file readable by
/// [`ScriptedProvider::from_script_file`].
pub fn write_script(path: &Path, rules: &[(String, String)]) -> std::io::Result<()> {
    let rules: Vec<_> = rules.iter().map(|(p, r)| json!({"pattern": p, "reply": r})).collect();
    std::fs::write(path, serde_json::to_string_pretty(&json!({ "rules": rules }))?)
}
