//! Per-change coordination: summarize, decide, then localize.
//!
//! The coordinator is plain code rather than a planning model: the order of
//! delegation, the single retry per sub-agent and the stop after a NO are
//! fixed, so runs are reproducible and every model call is accounted for.
//! The delegations are still written to a `planner` transcript.

use std::collections::BTreeSet;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::names::Stance;
use super::react::{Action, AgentTranscript, Deadline, ReactStep};
use super::roles::{
    decide_maintenance, localize_tests, summarize_change, AgentError, Localization, MaintenanceDecision, TestSuggestion,
};
use super::AgentSettings;
use crate::dataset::TestId;
use crate::diff::{ChangeRef, CodeChange};
use crate::llm::{ChatProvider, Embedder};
use crate::retrieval::{ScoredTest, VectorIndex, DEFAULT_TOP_K};

/// What the retrieval query is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    Summary,
    Diff,
    #[default]
    SummaryAndDiff,
}

impl QueryMode {
    pub fn build(self, summary: &str, change: &CodeChange) -> String {
        match self {
            QueryMode::Summary => summary.to_string(),
            QueryMode::Diff => change.rendered_text.clone(),
            QueryMode::SummaryAndDiff => format!("{summary}\n{}", change.rendered_text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub agents: AgentSettings,
    pub top_k: usize,
    pub query_mode: QueryMode,
    /// Show the hunk to the decider alongside the summary.
    pub decision_sees_diff: bool,
    /// Print every transcript to stdout as predictions finish.
    pub trace: bool,
    /// Wall-clock limit for one prediction; unlimited when absent.
    #[serde(default, with = "opt_duration_ms")]
    pub prediction_budget: Option<Duration>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            agents: AgentSettings::default(),
            top_k: DEFAULT_TOP_K,
            query_mode: QueryMode::default(),
            decision_sees_diff: true,
            trace: false,
            prediction_budget: None,
        }
    }
}

mod opt_duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&(d.as_millis() as u64)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<u64>::deserialize(d)?.map(Duration::from_millis))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Summarize,
    Decide,
    Localize,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Summarize => "summarize",
            Stage::Decide => "decide",
            Stage::Localize => "localize",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, thiserror::Error)]
#[error("prediction for {change} failed at {stage}: {message}")]
pub struct PipelineFailure {
    pub change: ChangeRef,
    pub stage: Stage,
    pub message: String,
    pub timed_out: bool,
    pub transcripts: Vec<AgentTranscript>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub change: ChangeRef,
    pub summary: String,
    pub decision: MaintenanceDecision,
    pub suggestions: Vec<TestSuggestion>,
    /// Test-like names in the answer that are not in the index.
    pub unmatched_names: Vec<String>,
    pub candidates: Vec<ScoredTest>,
    pub final_text: String,
    pub transcripts: Vec<AgentTranscript>,
}

impl Prediction {
    /// Tests flagged for update or review.
    pub fn predicted_tests(&self) -> BTreeSet<TestId> {
        self.tests_with(|s| matches!(s, Stance::NeedsUpdate | Stance::ShouldReview))
    }

    pub fn needs_update_tests(&self) -> BTreeSet<TestId> {
        self.tests_with(|s| s == Stance::NeedsUpdate)
    }

    fn tests_with(&self, keep: impl Fn(Stance) -> bool) -> BTreeSet<TestId> {
        self.suggestions.iter().filter(|s| keep(s.stance)).filter_map(|s| s.test_id.clone()).collect()
    }

    pub fn model_calls(&self) -> u32 {
        self.transcripts.iter().map(|t| t.model_calls).sum()
    }
}

pub struct Pipeline<'a> {
    pub chat: &'a dyn ChatProvider,
    pub embedder: &'a dyn Embedder,
    pub config: PipelineConfig,
}

struct Attempts {
    transcripts: Vec<AgentTranscript>,
}

impl Attempts {
    /// Runs `op` at most twice, retrying only on retryable failures.
    fn run<T>(&mut self, mut op: impl FnMut() -> Result<(T, AgentTranscript), AgentError>) -> Result<T, AgentError> {
        let mut tries = 0;
        loop {
            tries += 1;
            match op() {
                Ok((value, transcript)) => {
                    self.transcripts.push(transcript);
                    return Ok(value);
                }
                Err(e) if tries < 2 && e.is_retryable() => {
                    if let Some(t) = e.into_transcript() {
                        self.transcripts.push(t);
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn delegation(tool: &str, input: String, observation: String) -> ReactStep {
    ReactStep {
        thought: String::new(),
        action: Action::Tool { name: tool.into(), input },
        observation: Some(observation),
    }
}

impl<'a> Pipeline<'a> {
    pub fn new(chat: &'a dyn ChatProvider, embedder: &'a dyn Embedder, config: PipelineConfig) -> Self {
        Self { chat, embedder, config }
    }

    /// Predicts the tests affected by one code change.
    pub fn predict(&self, change: &CodeChange, index: &VectorIndex) -> Result<Prediction, PipelineFailure> {
        let result = self.predict_inner(change, index);
        if self.config.trace {
            let transcripts = match &result {
                Ok(p) => &p.transcripts,
                Err(f) => &f.transcripts,
            };
            let mut block = format!("### {}\n", change.change_ref());
            for t in transcripts {
                block.push_str(&t.render());
            }
            print!("{block}");
        }
        result
    }

    fn predict_inner(&self, change: &CodeChange, index: &VectorIndex) -> Result<Prediction, PipelineFailure> {
        let settings = &self.config.agents;
        let deadline = Deadline::after(self.config.prediction_budget);
        let mut attempts = Attempts { transcripts: Vec::new() };
        let mut planner = AgentTranscript::new("planner");
        let mut maintainer = AgentTranscript::new("test-maintenance-agent");
        let change_ref = change.change_ref();

        let fail = |stage: Stage, err: AgentError, mut attempts: Attempts, planner: AgentTranscript, maintainer| {
            let timed_out =
                matches!(err, AgentError::Timeout { .. } | AgentError::React(super::ReactError::Timeout(_)));
            let message = err.to_string();
            if let Some(t) = err.into_transcript() {
                attempts.transcripts.push(t);
            }
            let mut transcripts = vec![planner, maintainer];
            transcripts.append(&mut attempts.transcripts);
            PipelineFailure { change: change.change_ref(), stage, message, timed_out, transcripts }
        };

        let summary = match attempts.run(|| summarize_change(change, self.chat, settings, deadline)) {
            Ok(s) => s,
            Err(e) => return Err(fail(Stage::Summarize, e, attempts, planner, maintainer)),
        };
        maintainer.steps.push(delegation("code_summarizer", change_ref.to_string(), summary.clone()));

        let shown = self.config.decision_sees_diff.then_some(change);
        let decision = match attempts.run(|| decide_maintenance(&summary, shown, self.chat, settings, deadline)) {
            Ok(d) => d,
            Err(e) => return Err(fail(Stage::Decide, e, attempts, planner, maintainer)),
        };
        let verdict = format!("{}: {}", if decision.needed { "YES" } else { "NO" }, decision.explanation);
        maintainer.steps.push(delegation("maintenance_decider", summary.clone(), verdict.clone()));
        planner.steps.push(delegation("test_maintenance_agent", change_ref.to_string(), verdict));

        if !decision.needed {
            let suggestions =
                super::roles::build_suggestions(&decision.explanation, &Default::default(), index, &BTreeSet::new())
                    .into_iter()
                    .filter(|s| s.stance == Stance::SuggestNew)
                    .collect();
            let final_text = format!("No test maintenance is needed. {}", decision.explanation);
            planner.steps.push(final_step(&final_text));
            return Ok(self.finish(
                change,
                summary,
                decision,
                suggestions,
                Vec::new(),
                Vec::new(),
                final_text,
                planner,
                maintainer,
                attempts,
            ));
        }

        let query = self.config.query_mode.build(&summary, change);
        let localization: Localization = match attempts.run(|| {
            let l = localize_tests(
                change,
                &summary,
                &query,
                index,
                self.embedder,
                self.chat,
                self.config.top_k,
                settings,
                deadline,
            )?;
            let transcript = l.transcript.clone();
            Ok((l, transcript))
        }) {
            Ok(l) => l,
            Err(e) => return Err(fail(Stage::Localize, e, attempts, planner, maintainer)),
        };
        let tests = localization.suggestions.iter().filter(|s| s.test_id.is_some()).count();
        planner.steps.push(delegation(
            "test_localization_agent",
            summary.clone(),
            format!("{tests} test(s) identified"),
        ));
        let final_text = localization.answer.clone();
        planner.steps.push(final_step(&final_text));
        Ok(self.finish(
            change,
            summary,
            decision,
            localization.suggestions,
            localization.names.unmatched,
            localization.candidates,
            final_text,
            planner,
            maintainer,
            attempts,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        change: &CodeChange,
        summary: String,
        decision: MaintenanceDecision,
        suggestions: Vec<TestSuggestion>,
        unmatched_names: Vec<String>,
        candidates: Vec<ScoredTest>,
        final_text: String,
        planner: AgentTranscript,
        maintainer: AgentTranscript,
        mut attempts: Attempts,
    ) -> Prediction {
        let mut transcripts = vec![planner, maintainer];
        transcripts.append(&mut attempts.transcripts);
        Prediction {
            change: change.change_ref(),
            summary,
            decision,
            suggestions,
            unmatched_names,
            candidates,
            final_text,
            transcripts,
        }
    }

    /// Predicts every change, `parallelism` at a time. Results keep the
    /// input order.
    pub fn predict_all(
        &self,
        changes: &[CodeChange],
        index: &VectorIndex,
        parallelism: usize,
    ) -> Vec<Result<Prediction, PipelineFailure>> {
        use rayon::prelude::*;
        if parallelism <= 1 {
            return changes.iter().map(|c| self.predict(c, index)).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
            Ok(pool) => pool.install(|| changes.par_iter().map(|c| self.predict(c, index)).collect()),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); predicting sequentially");
                changes.iter().map(|c| self.predict(c, index)).collect()
            }
        }
    }
}

fn final_step(text: &str) -> ReactStep {
    ReactStep { thought: String::new(), action: Action::FinalAnswer(text.to_string()), observation: None }
}
