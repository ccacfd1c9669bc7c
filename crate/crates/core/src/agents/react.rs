//! Thought / Action / Observation loop.
//!
//! Every model call consumes one iteration, including calls answered with
//! output that does not follow the action grammar (those earn a format
//! reminder). The loop ends on a final answer, the iteration cap, or the
//! per-prompt timeout.

use std::fmt::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::{complete, ChatMessage, ChatProvider, ChatRequest, LlmError, DEFAULT_TIMEOUT};

pub const DEFAULT_MAX_ITERATIONS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub role_prompt: String,
    pub max_iterations: u32,
    #[serde(with = "crate::llm::duration_ms")]
    pub per_prompt_timeout: Duration,
}

impl AgentSpec {
    pub fn new(name: impl Into<String>, role_prompt: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            role_prompt: role_prompt.into(),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            per_prompt_timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_limits(mut self, max_iterations: u32, per_prompt_timeout: Duration) -> Self {
        self.max_iterations = max_iterations.max(1);
        self.per_prompt_timeout = per_prompt_timeout;
        self
    }
}

type Handler<'a> = Box<dyn FnMut(&str) -> Result<String, String> + 'a>;

/// A callable the agent may invoke by name. Failures are reported back to
/// the model as observations.
pub struct Tool<'a> {
    pub name: String,
    pub description: String,
    handler: Handler<'a>,
}

impl<'a> Tool<'a> {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        handler: impl FnMut(&str) -> Result<String, String> + 'a,
    ) -> Self {
        Self { name: name.into(), description: description.into(), handler: Box::new(handler) }
    }

    pub fn call(&mut self, input: &str) -> Result<String, String> {
        (self.handler)(input)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Tool { name: String, input: String },
    FinalAnswer(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactStep {
    pub thought: String,
    pub action: Action,
    /// `None` exactly when the action is a final answer.
    pub observation: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Answered,
    IterationLimit,
    Timeout,
    /// The provider failed for a reason other than a timeout.
    ProviderError,
    /// Orchestration record only; no model calls were made by this agent.
    Delegated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub agent: String,
    pub steps: Vec<ReactStep>,
    pub reminders_issued: u32,
    /// Raw replies that failed to parse, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub format_failures: Vec<String>,
    pub model_calls: u32,
    pub outcome: Outcome,
}

impl AgentTranscript {
    pub fn new(agent: impl Into<String>) -> Self {
        Self {
            agent: agent.into(),
            steps: Vec::new(),
            reminders_issued: 0,
            format_failures: Vec::new(),
            model_calls: 0,
            outcome: Outcome::Delegated,
        }
    }

    /// Model calls made, reminders included.
    pub fn consumed_iterations(&self) -> u32 {
        self.model_calls
    }

    /// Human-readable Thought/Action/Observation log.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "== {} ({:?}, {} model call(s), {} reminder(s))",
            self.agent, self.outcome, self.model_calls, self.reminders_issued
        );
        for step in &self.steps {
            if !step.thought.is_empty() {
                let _ = writeln!(out, "Thought: {}", step.thought);
            }
            match &step.action {
                Action::Tool { name, input } => {
                    let _ = writeln!(out, "Action: {name}");
                    let _ = writeln!(out, "Action Input: {input}");
                }
                Action::FinalAnswer(answer) => {
                    let _ = writeln!(out, "Final Answer: {answer}");
                }
            }
            if let Some(obs) = &step.observation {
                let _ = writeln!(out, "Observation: {obs}");
            }
        }
        for failure in &self.format_failures {
            let _ = writeln!(out, "[unparsable reply] {}", failure.trim());
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReactError {
    #[error("agent {} reached its iteration limit without a final answer", .0.agent)]
    IterationLimit(Box<AgentTranscript>),
    #[error("agent {} exceeded its time limit", .0.agent)]
    Timeout(Box<AgentTranscript>),
    #[error("agent {} failed: {source}", transcript.agent)]
    Provider { source: LlmError, transcript: Box<AgentTranscript> },
}

impl ReactError {
    pub fn transcript(&self) -> &AgentTranscript {
        match self {
            ReactError::IterationLimit(t) | ReactError::Timeout(t) => t,
            ReactError::Provider { transcript, .. } => transcript,
        }
    }

    pub fn into_transcript(self) -> AgentTranscript {
        match self {
            ReactError::IterationLimit(t) | ReactError::Timeout(t) => *t,
            ReactError::Provider { transcript, .. } => *transcript,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedReply {
    pub thought: String,
    pub action: Action,
}

fn final_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t*]*final answer[ \t*]*:").unwrap())
}

fn action_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t*]*action[ \t*]*:[ \t]*(.*)$").unwrap())
}

fn action_input_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t*]*action input[ \t*]*:").unwrap())
}

fn observation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t*]*observation[ \t*]*:").unwrap())
}

fn clean_thought(raw: &str) -> String {
    let t = raw.trim();
    let lower = t.to_ascii_lowercase();
    let t = if lower.starts_with("thought:") { &t[8..] } else { t };
    t.trim().to_string()
}

/// Parses one model reply against the action grammar:
///
/// ```text
/// Thought: <reasoning>
/// Action: <tool name>
/// Action Input: <input>
/// ```
///
/// or `Thought: ...` followed by `Final Answer: <answer>`.
pub fn parse_react_reply(text: &str) -> Result<ParsedReply, String> {
    let final_match = final_re().find(text);
    let action_match = action_re().captures(text);
    match (final_match, action_match) {
        (Some(_), Some(_)) => Err("reply contains both an action and a final answer".into()),
        (Some(m), None) => {
            let answer = text[m.end()..].trim();
            if answer.is_empty() {
                return Err("final answer is empty".into());
            }
            Ok(ParsedReply {
                thought: clean_thought(&text[..m.start()]),
                action: Action::FinalAnswer(answer.to_string()),
            })
        }
        (None, Some(caps)) => {
            let whole = caps.get(0).unwrap();
            let name = caps[1].trim().trim_matches(|c| matches!(c, '`' | '[' | ']' | '"' | '*')).trim();
            if name.is_empty() {
                return Err("action names no tool".into());
            }
            let rest = &text[whole.end()..];
            let Some(input_marker) = action_input_re().find(rest) else {
                return Err("action without an Action Input line".into());
            };
            let mut input = &rest[input_marker.end()..];
            if let Some(obs) = observation_re().find(input) {
                input = &input[..obs.start()];
            }
            Ok(ParsedReply {
                thought: clean_thought(&text[..whole.start()]),
                action: Action::Tool {
                    name: name.to_string(),
                    input: input.trim().trim_matches('`').trim().to_string(),
                },
            })
        }
        (None, None) => Err("reply has neither an action nor a final answer".into()),
    }
}

fn grammar(tools: &[Tool<'_>]) -> String {
    let mut text = String::from("\n\nRespond in exactly one of these two forms.\n\n");
    if tools.is_empty() {
        text.push_str("Thought: <your reasoning>\nFinal Answer: <your answer>\n");
        return text;
    }
    text.push_str(
        "To use a tool:\nThought: <your reasoning>\nAction: <tool name>\nAction Input: <input for the tool>\n\n",
    );
    text.push_str("When you are done:\nThought: <your reasoning>\nFinal Answer: <your answer>\n\nAvailable tools:\n");
    for tool in tools {
        let _ = writeln!(text, "- {}: {}", tool.name, tool.description);
    }
    text
}

fn reminder(tools: &[Tool<'_>], problem: &str) -> String {
    let names: Vec<&str> = tools.iter().map(|t| t.name.as_str()).collect();
    let mut text = format!("Your reply could not be parsed ({problem}). Use the required format exactly:\n");
    if !names.is_empty() {
        let _ = writeln!(text, "Thought: ...\nAction: one of [{}]\nAction Input: ...\nor", names.join(", "));
    }
    text.push_str("Thought: ...\nFinal Answer: ...");
    text
}

/// Optional wall-clock bound shared by every call in one prediction.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deadline(pub Option<Instant>);

impl Deadline {
    pub fn after(budget: Option<Duration>) -> Self {
        Self(budget.map(|b| Instant::now() + b))
    }

    /// Timeout for the next call: the per-prompt limit, shortened by the
    /// deadline. `None` when the deadline has passed.
    pub fn clamp(&self, per_prompt: Duration) -> Option<Duration> {
        match self.0 {
            None => Some(per_prompt),
            Some(at) => {
                let left = at.saturating_duration_since(Instant::now());
                (!left.is_zero()).then(|| left.min(per_prompt))
            }
        }
    }
}

/// Runs the loop until a final answer, the iteration cap or a timeout.
pub fn run_react(
    spec: &AgentSpec,
    input: &str,
    provider: &dyn ChatProvider,
    tools: &mut [Tool<'_>],
    deadline: Deadline,
) -> Result<(String, AgentTranscript), ReactError> {
    let mut transcript = AgentTranscript::new(&spec.name);
    let system_prompt = format!("{}{}", spec.role_prompt, grammar(tools));
    let mut messages = vec![ChatMessage::user(input)];

    while transcript.model_calls < spec.max_iterations.max(1) {
        let Some(timeout) = deadline.clamp(spec.per_prompt_timeout) else {
            transcript.outcome = Outcome::Timeout;
            return Err(ReactError::Timeout(Box::new(transcript)));
        };
        let request = ChatRequest {
            system_prompt: system_prompt.clone(),
            messages: messages.clone(),
            temperature: 0.0,
            timeout,
            max_tokens: None,
        };
        transcript.model_calls += 1;
        let started = Instant::now();
        let response = match complete(provider, &request) {
            Ok(r) => r,
            Err(LlmError::TimeoutExceeded(_)) => {
                transcript.outcome = Outcome::Timeout;
                return Err(ReactError::Timeout(Box::new(transcript)));
            }
            Err(source) => {
                transcript.outcome = Outcome::ProviderError;
                return Err(ReactError::Provider { source, transcript: Box::new(transcript) });
            }
        };
        if started.elapsed() > timeout {
            transcript.outcome = Outcome::Timeout;
            return Err(ReactError::Timeout(Box::new(transcript)));
        }

        let reply = response.text;
        messages.push(ChatMessage::assistant(reply.clone()));
        match parse_react_reply(&reply) {
            Err(problem) => {
                transcript.reminders_issued += 1;
                transcript.format_failures.push(reply);
                messages.push(ChatMessage::user(reminder(tools, &problem)));
            }
            Ok(ParsedReply { thought, action: Action::FinalAnswer(answer) }) => {
                transcript.steps.push(ReactStep {
                    thought,
                    action: Action::FinalAnswer(answer.clone()),
                    observation: None,
                });
                transcript.outcome = Outcome::Answered;
                return Ok((answer, transcript));
            }
            Ok(ParsedReply { thought, action: Action::Tool { name, input } }) => {
                let observation = match tools.iter_mut().find(|t| t.name.eq_ignore_ascii_case(&name)) {
                    Some(tool) => match tool.call(&input) {
                        Ok(out) => out,
                        Err(e) => format!("Tool {name} failed: {e}"),
                    },
                    None => {
                        let known: Vec<&str> = tools.iter().map(|t| t.name.as_str()).collect();
                        format!("Unknown tool {name:?}. Available tools: [{}]", known.join(", "))
                    }
                };
                messages.push(ChatMessage::user(format!("Observation: {observation}")));
                transcript.steps.push(ReactStep {
                    thought,
                    action: Action::Tool { name, input },
                    observation: Some(observation),
                });
            }
        }
    }
    transcript.outcome = Outcome::IterationLimit;
    Err(ReactError::IterationLimit(Box::new(transcript)))
}
