//! Mine a small generated repository into a dataset and print its manifest.

use testmaint::dataset::{build_dataset, write_dataset, BuildOptions, CommitRange, TestConventions};
use testmaint::diff::{PathRules, DEFAULT_CONTEXT_LINES};
use testmaint::fixture;
use testmaint::git::Repo;

pub fn run() -> anyhow::Result<String> {
    let dir = tempfile::tempdir()?;
    let fx = fixture::three_commit_repo(dir.path())?;
    let repo = Repo::open(&fx.root)?;
    let dataset = build_dataset(
        &repo,
        &BuildOptions {
            range: CommitRange { from: Some(fx.base.clone()), to: fx.head().into() },
            context_lines: DEFAULT_CONTEXT_LINES,
            rules: PathRules::default(),
            conventions: TestConventions::default(),
        },
    )?;
    let mut out = String::new();
    for r in &dataset.records {
        out.push_str(&format!(
            "{} {:?}: {} changes, {} of {} tests affected\n",
            &r.commit_id[..8],
            r.subset,
            r.changes.len(),
            r.ground_truth.len(),
            r.universe.len()
        ));
    }
    let mut jsonl = Vec::new();
    write_dataset(&dataset, &mut jsonl)?;
    out.push_str(&format!("{} bytes of JSONL\n", jsonl.len()));
    Ok(out)
}

fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
