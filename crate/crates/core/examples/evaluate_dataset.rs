//! Score the pipeline against mined ground truth and print the metrics table.

use testmaint::agents::{Pipeline, PipelineConfig};
use testmaint::dataset::{build_dataset, BuildOptions, CommitRange, TestConventions};
use testmaint::diff::{PathRules, DEFAULT_CONTEXT_LINES};
use testmaint::eval::{evaluate_dataset, render_table, EvalOptions, RepoIndexSource};
use testmaint::fixture::{self, OraclePolicy};
use testmaint::git::Repo;
use testmaint::llm::HashEmbedder;
use testmaint::retrieval::IndexMode;

pub fn run() -> anyhow::Result<String> {
    let dir = tempfile::tempdir()?;
    let fx = fixture::three_commit_repo(dir.path())?;
    let repo = Repo::open(&fx.root)?;
    let rules = PathRules::default();
    let conventions = TestConventions::default();
    let dataset = build_dataset(
        &repo,
        &BuildOptions {
            range: CommitRange { from: Some(fx.base.clone()), to: fx.head().into() },
            context_lines: DEFAULT_CONTEXT_LINES,
            rules: rules.clone(),
            conventions: conventions.clone(),
        },
    )?;

    // One spurious suggestion on the unchanged commit keeps the table interesting.
    let chat = fixture::oracle_provider(&dataset, OraclePolicy::OneFalsePositive)?;
    let embedder = HashEmbedder::new(256);
    let indexes = RepoIndexSource {
        repo: &repo,
        rules: &rules,
        conventions: &conventions,
        mode: IndexMode::RawCode,
        embedder: &embedder,
        summarizer: None,
        cache: None,
    };
    let pipeline = Pipeline::new(&chat, &embedder, PipelineConfig::default());
    let run = evaluate_dataset(&dataset, &pipeline, &indexes, &EvalOptions::default());
    Ok(render_table(&run))
}

fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
