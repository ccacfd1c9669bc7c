//! Command-line interface. `main.rs` only forwards to [`run`].

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::agents::{LlmTestSummarizer, Pipeline, PipelineFailure, Prediction, Stance, Verbosity};
use crate::config::Config;
use crate::dataset::{build_dataset, load_dataset, serialize_dataset, BuildOptions, CommitRange, Dataset};
use crate::diff::{parse_unified_diff, produce_diff, split_changes, CodeChange};
use crate::eval::{
    evaluate_dataset, render_table, write_commit_details, write_report, EvalOptions, EvaluationRun, IndexSource,
    RepoIndexSource,
};
use crate::git::Repo;
use crate::retrieval::{IndexCache, IndexMode, TestSummarizer, VectorIndex};

#[derive(Debug, Parser)]
#[command(name = "testmaint", version, about = "Predict which tests need maintenance after a code change")]
pub struct Cli {
    /// Configuration file (TOML). Flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine commit history into a dataset file.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Build (or refresh) the test index for one commit.
    Index(IndexArgs),
    /// Predict the tests affected by a diff or a commit.
    Predict(PredictArgs),
    /// Run predictions over a dataset and score them.
    Evaluate(EvaluateArgs),
    /// Print the table of a saved evaluation report.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Build a dataset from a commit range.
    Build(DatasetBuildArgs),
}

#[derive(Debug, Args)]
pub struct DatasetBuildArgs {
    /// Repository to mine.
    #[arg(long)]
    pub repo: Option<PathBuf>,
    /// Exclusive start of the range; the whole history when omitted.
    #[arg(long)]
    pub from: Option<String>,
    /// Inclusive end of the range.
    #[arg(long, default_value = "HEAD")]
    pub to: String,
    /// Unchanged lines of context around each hunk [default: 9].
    #[arg(long)]
    pub context: Option<u32>,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Raw,
    Summary,
}

impl From<ModeArg> for IndexMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Raw => IndexMode::RawCode,
            ModeArg::Summary => IndexMode::Summary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerbosityArg {
    Brief,
    Normal,
    Detailed,
}

impl From<VerbosityArg> for Verbosity {
    fn from(v: VerbosityArg) -> Self {
        match v {
            VerbosityArg::Brief => Verbosity::Brief,
            VerbosityArg::Normal => Verbosity::Normal,
            VerbosityArg::Detailed => Verbosity::Detailed,
        }
    }
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Repository root [default: from the config file].
    #[arg(long)]
    pub repo: Option<PathBuf>,
    /// Commit whose tests are indexed.
    #[arg(long, default_value = "HEAD")]
    pub commit: String,
    /// Index raw test code or LLM summaries of it.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Index cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["diff", "commit"]))]
pub struct PredictArgs {
    /// Repository root [default: from the config file].
    #[arg(long)]
    pub repo: Option<PathBuf>,
    /// Unified diff file to analyse.
    #[arg(long)]
    pub diff: Option<PathBuf>,
    /// Commit to analyse (diffed against its first parent).
    #[arg(long)]
    pub commit: Option<String>,
    /// Commit whose tests are searched when predicting from --diff.
    #[arg(long, default_value = "HEAD")]
    pub at: String,
    /// Index raw test code or LLM summaries of it.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Build the index when it is not cached yet.
    #[arg(long)]
    pub build_index: bool,
    /// Index cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
    /// Print every agent's Thought/Action/Observation log.
    #[arg(long)]
    pub trace: bool,
    #[arg(long, value_enum)]
    pub verbosity: Option<VerbosityArg>,
    /// Retrieval depth [default: 10].
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Changes predicted concurrently.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dataset file written by `dataset build`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Repository the dataset was mined from [default: the one in the manifest].
    #[arg(long)]
    pub repo: Option<PathBuf>,
    /// Index raw test code or LLM summaries of it.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Independent repetitions [default: 2].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Commits evaluated concurrently.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Index cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write per-commit results as JSON lines.
    #[arg(long)]
    pub details: Option<PathBuf>,
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report written by `evaluate --report`.
    #[arg(long)]
    pub input: PathBuf,
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 on success, 1 on a domain failure, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let mut config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Dataset(DatasetCommand::Build(args)) => dataset_build(&mut config, args),
        Command::Index(args) => index(&mut config, args),
        Command::Predict(args) => predict(&mut config, args),
        Command::Evaluate(args) => evaluate(&mut config, args),
        Command::Report(args) => report(args),
    }
}

fn open_repo(config: &Config, flag: Option<PathBuf>) -> Result<Repo> {
    let path = flag.unwrap_or_else(|| config.repo.clone());
    Ok(Repo::open(&path)?)
}

fn dataset_build(config: &mut Config, args: DatasetBuildArgs) -> Result<i32> {
    let repo = open_repo(config, args.repo)?;
    let options = BuildOptions {
        range: CommitRange { from: args.from, to: args.to },
        context_lines: args.context.unwrap_or(config.context_lines),
        rules: config.path_rules.clone(),
        conventions: config.tests.clone(),
    };
    let dataset = build_dataset(&repo, &options)?;
    serialize_dataset(&dataset, &args.out)?;
    print!("{}", dataset_summary(&dataset));
    println!("written to {}", args.out.display());
    Ok(0)
}

/// Commit, change and subset statistics of a dataset.
pub fn dataset_summary(dataset: &Dataset) -> String {
    let c = &dataset.manifest.counts;
    let ex = &dataset.manifest.exclusions;
    let mean = |m: Option<f64>| m.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}"));
    let mut s = String::new();
    let _ = writeln!(
        s,
        "commits: {}  changes: {}  context lines: {}",
        c.commits, c.changes, dataset.manifest.context_lines
    );
    let _ = writeln!(
        s,
        "changed subset: {} commits, {} changes (mean {})",
        c.changed_commits,
        c.changed_subset_changes,
        mean(c.mean_changes_changed)
    );
    let _ = writeln!(
        s,
        "unchanged subset: {} commits, {} changes (mean {})",
        c.unchanged_commits,
        c.unchanged_subset_changes,
        mean(c.mean_changes_unchanged)
    );
    let _ = writeln!(
        s,
        "excluded: {} commits without source changes, {} test hunks outside any test, {} unparsable test files",
        ex.commits_without_source_changes, ex.unencapsulated_test_hunks, ex.unparsable_test_files
    );
    s
}

struct Services {
    chat: std::sync::Arc<dyn crate::llm::ChatProvider>,
    embedder: std::sync::Arc<dyn crate::llm::Embedder>,
}

impl Services {
    fn new(config: &Config) -> Result<Self> {
        Ok(Self { chat: config.chat_provider()?, embedder: config.embedder() })
    }
}

fn with_index_source<R>(
    config: &Config,
    repo: &Repo,
    services: &Services,
    f: impl FnOnce(&RepoIndexSource<'_>) -> R,
) -> R {
    let summarizer = LlmTestSummarizer::new(services.chat.as_ref(), config.agent_settings().per_prompt_timeout);
    let source = RepoIndexSource {
        repo,
        rules: &config.path_rules,
        conventions: &config.tests,
        mode: config.mode,
        embedder: services.embedder.as_ref(),
        summarizer: Some(&summarizer as &dyn TestSummarizer),
        cache: Some(IndexCache::new(&config.cache_dir)),
    };
    f(&source)
}

fn index(config: &mut Config, args: IndexArgs) -> Result<i32> {
    if let Some(m) = args.mode {
        config.mode = m.into();
    }
    if let Some(d) = args.cache_dir {
        config.cache_dir = d;
    }
    let repo = open_repo(config, args.repo)?;
    let services = Services::new(config)?;
    let commit = repo.resolve_commit(&args.commit)?;
    let cache = IndexCache::new(&config.cache_dir);
    // Drop any cached copy so the index is rebuilt from the snapshot.
    let path = cache.index_path(&commit, config.mode, &services.embedder.fingerprint());
    if path.exists() {
        std::fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
    }
    let index = with_index_source(config, &repo, &services, |s| s.index_for(&commit)).map_err(anyhow::Error::msg)?;
    for w in &index.warnings {
        log::warn!("{w}");
    }
    println!(
        "indexed {} tests of {} ({} mode) into {}",
        index.len(),
        &commit[..12.min(commit.len())],
        index.mode,
        path.display()
    );
    Ok(0)
}

fn load_index(config: &Config, repo: &Repo, services: &Services, commit: &str, build: bool) -> Result<VectorIndex> {
    let cache = IndexCache::new(&config.cache_dir);
    if let Some(index) = cache.load(commit, config.mode, &services.embedder.fingerprint())? {
        return Ok(index);
    }
    if !build {
        bail!(
            "no {} index for commit {} in {}; run `testmaint index` first or pass --build-index",
            config.mode,
            commit,
            config.cache_dir.display()
        );
    }
    with_index_source(config, repo, services, |s| s.index_for(commit)).map_err(anyhow::Error::msg)
}

fn predict(config: &mut Config, args: PredictArgs) -> Result<i32> {
    if let Some(m) = args.mode {
        config.mode = m.into();
    }
    if let Some(d) = args.cache_dir {
        config.cache_dir = d;
    }
    if let Some(v) = args.verbosity {
        config.verbosity = v.into();
    }
    if let Some(k) = args.top_k {
        config.top_k = k;
    }
    if let Some(p) = args.parallelism {
        config.parallelism = p;
    }
    config.validate()?;
    let repo = open_repo(config, args.repo)?;
    let (changes, at): (Vec<CodeChange>, String) = match (&args.diff, &args.commit) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut diff = parse_unified_diff(&text).with_context(|| format!("parsing {}", path.display()))?;
            diff.commit_id = "working".into();
            (split_changes(&diff, &config.path_rules), repo.resolve_commit(&args.at)?)
        }
        (None, Some(rev)) => {
            let commit = repo.resolve_commit(rev)?;
            let diff = produce_diff(&repo, &commit, config.context_lines)?;
            (split_changes(&diff, &config.path_rules), commit)
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    if changes.is_empty() {
        bail!("no source code changes to analyse");
    }

    let services = Services::new(config)?;
    let index = load_index(config, &repo, &services, &at, args.build_index)?;
    let pipeline =
        Pipeline::new(services.chat.as_ref(), services.embedder.as_ref(), config.pipeline_config(args.trace));
    let results = pipeline.predict_all(&changes, &index, config.parallelism);
    let (predictions, failures): (Vec<_>, Vec<_>) = results.into_iter().partition(Result::is_ok);
    let predictions: Vec<Prediction> = predictions.into_iter().map(Result::unwrap).collect();
    let failures: Vec<PipelineFailure> = failures.into_iter().map(|r| r.unwrap_err()).collect();

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match args.format {
        OutputFormat::Json => {
            let payload = serde_json::json!({ "predictions": predictions, "failures": failures });
            writeln!(out, "{}", serde_json::to_string_pretty(&payload)?)?;
        }
        OutputFormat::Text => {
            for p in &predictions {
                write!(out, "{}", render_prediction(p))?;
            }
        }
    }
    for f in &failures {
        eprintln!("error: prediction for {} failed at the {} stage: {}", f.change, f.stage, f.message);
    }
    Ok(if failures.is_empty() { 0 } else { 1 })
}

/// Text rendering of one prediction.
pub fn render_prediction(p: &Prediction) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "== {}", p.change);
    if !p.decision.needed {
        let _ = writeln!(s, "No test maintenance needed.");
        let _ = writeln!(s, "{}", p.decision.explanation);
    } else {
        let _ = writeln!(s, "Test maintenance needed: {}", p.decision.explanation);
    }
    let tests: Vec<_> = p.suggestions.iter().filter(|s| s.test_id.is_some()).collect();
    if !tests.is_empty() {
        let _ = writeln!(s, "Tests to look at:");
        for (i, t) in tests.iter().enumerate() {
            let id = t.test_id.as_ref().unwrap();
            let stance = match t.stance {
                Stance::NeedsUpdate => "update",
                Stance::ShouldReview => "review",
                Stance::SuggestNew => "new",
            };
            let _ =
                writeln!(s, "{}. {} ({}) [{stance}: {}]", i + 1, id.short_name(), id.file_path, t.confidence_phrase);
            let _ = writeln!(s, "   {}", t.rationale);
        }
    }
    for t in p.suggestions.iter().filter(|s| s.test_id.is_none()) {
        let label = if t.stance == Stance::SuggestNew { "New tests suggested" } else { "Review suggested" };
        let _ = writeln!(s, "{label}: {}", t.rationale);
    }
    if p.decision.needed && tests.is_empty() && p.suggestions.is_empty() {
        let _ =
            writeln!(s, "No specific test cases were identified. Review the tests covering {}.", p.change.file_path);
    }
    if !p.unmatched_names.is_empty() {
        let _ = writeln!(s, "Names not found in the test suite: {}", p.unmatched_names.join(", "));
    }
    s
}

fn evaluate(config: &mut Config, args: EvaluateArgs) -> Result<i32> {
    if let Some(m) = args.mode {
        config.mode = m.into();
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(p) = args.parallelism {
        config.parallelism = p;
    }
    if let Some(k) = args.top_k {
        config.top_k = k;
    }
    if let Some(d) = args.cache_dir {
        config.cache_dir = d;
    }
    config.validate()?;
    let dataset = load_dataset(&args.dataset)?;
    let repo_path = args.repo.unwrap_or_else(|| PathBuf::from(&dataset.manifest.repo));
    let repo = Repo::open(&repo_path)?;
    let services = Services::new(config)?;
    let pipeline =
        Pipeline::new(services.chat.as_ref(), services.embedder.as_ref(), config.pipeline_config(args.trace));
    let options = EvalOptions { trials: config.trials, parallelism: config.parallelism, mode: config.mode };
    let run =
        with_index_source(config, &repo, &services, |source| evaluate_dataset(&dataset, &pipeline, source, &options));
    print!("{}", render_table(&run));
    if let Some(path) = &args.report {
        write_report(&run, path)?;
    }
    if let Some(path) = &args.details {
        write_commit_details(&run, path)?;
    }
    Ok(0)
}

fn report(args: ReportArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let run: EvaluationRun =
        serde_json::from_str(&text).with_context(|| format!("{} is not an evaluation report", args.input.display()))?;
    print!("{}", render_table(&run));
    Ok(0)
}
