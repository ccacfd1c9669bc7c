//! LLM agents: change summarization, the maintenance decision, test
//! localization, and the coordinator that runs them per code change.

mod names;
mod pipeline;
pub mod prompts;
mod react;
mod roles;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use names::{classify_stance, extract_test_names, split_segments, ExtractedNames, NameMatch, Stance};
pub use pipeline::{Pipeline, PipelineConfig, PipelineFailure, Prediction, QueryMode, Stage};
pub use prompts::Verbosity;
pub use react::{
    parse_react_reply, run_react, Action, AgentSpec, AgentTranscript, Deadline, Outcome, ParsedReply, ReactError,
    ReactStep, Tool, DEFAULT_MAX_ITERATIONS,
};
pub use roles::{
    build_suggestions, decide_maintenance, localize_tests, parse_verdict, summarize_change, AgentError,
    LlmTestSummarizer, Localization, MaintenanceDecision, TestSuggestion,
};

use crate::llm::DEFAULT_TIMEOUT;

/// Limits and style shared by every agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub max_iterations: u32,
    #[serde(with = "crate::llm::duration_ms")]
    pub per_prompt_timeout: Duration,
    pub verbosity: Verbosity,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            per_prompt_timeout: DEFAULT_TIMEOUT,
            verbosity: Verbosity::default(),
        }
    }
}
