//! Predict affected tests for one code change with a scripted model.

use testmaint::agents::{Pipeline, PipelineConfig};
use testmaint::dataset::{build_dataset, BuildOptions, CommitRange, TestConventions};
use testmaint::diff::{PathRules, DEFAULT_CONTEXT_LINES};
use testmaint::eval::{IndexSource, RepoIndexSource};
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

    // The scripted model knows the right answer for every change in the dataset.
    let chat = fixture::oracle_provider(&dataset, OraclePolicy::Exact)?;
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
    let record = &dataset.records[0];
    let index = indexes.index_for(&record.commit_id).map_err(anyhow::Error::msg)?;
    let pipeline = Pipeline::new(&chat, &embedder, PipelineConfig::default());
    let prediction = pipeline.predict(&record.changes[0], &index)?;
    Ok(testmaint::cli::render_prediction(&prediction))
}

fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
