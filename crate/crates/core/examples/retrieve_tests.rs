//! Index test methods and rank them against a query.

use testmaint::dataset::{LineSpan, TestCase, TestId};
use testmaint::llm::HashEmbedder;
use testmaint::retrieval::{build_index, retrieve_top_k, IndexMode};

pub fn run() -> anyhow::Result<String> {
    let bodies = [
        ("testDivideByZero", "assertThrows(ArithmeticException.class, () -> calc.divide(1, 0));"),
        ("testAdd", "assertEquals(3, calc.add(1, 2));"),
        ("testParseConfig", "Config c = Config.parse(\"a=1\"); assertEquals(1, c.get(\"a\"));"),
    ];
    let tests: Vec<TestCase> = bodies
        .iter()
        .map(|(name, body)| TestCase {
            id: TestId::new("src/test/java/CalcTest.java", "CalcTest", *name),
            body: body.to_string(),
            span: LineSpan { start: 1, end: 1 },
            commit_id: "HEAD".into(),
        })
        .collect();
    let embedder = HashEmbedder::new(256);
    let index = build_index("HEAD", &tests, IndexMode::RawCode, &embedder, None)?;
    let mut out = String::new();
    for hit in retrieve_top_k(&index, "divide throws ArithmeticException on zero", 2, &embedder)? {
        out.push_str(&format!("{:.3} {}\n", hit.score, hit.test_id.method));
    }
    Ok(out)
}

fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
