use std::collections::BTreeSet;
use std::fmt::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::names::{classify_stance, extract_test_names, split_segments, ExtractedNames, Stance};
use super::prompts;
use super::react::{run_react, Action, AgentSpec, AgentTranscript, Deadline, Outcome, ReactError, ReactStep, Tool};
use super::AgentSettings;
use crate::dataset::{TestCase, TestId};
use crate::diff::CodeChange;
use crate::llm::{complete, ChatMessage, ChatProvider, ChatRequest, Embedder, LlmError};
use crate::retrieval::{retrieve_top_k, RetrievalError, ScoredTest, TestSummarizer, VectorIndex};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("summarizer returned an empty summary")]
    SummarizationFailure(Box<AgentTranscript>),
    #[error("could not read a YES/NO decision from {raw:?}")]
    ParseFailure { raw: String, transcript: Box<AgentTranscript> },
    #[error(transparent)]
    React(#[from] ReactError),
    #[error("{agent} exceeded its time limit")]
    Timeout { agent: String, transcript: Box<AgentTranscript> },
    #[error("{agent} failed: {source}")]
    Provider { agent: String, source: LlmError, transcript: Box<AgentTranscript> },
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] RetrievalError),
}

impl AgentError {
    pub fn into_transcript(self) -> Option<AgentTranscript> {
        match self {
            AgentError::SummarizationFailure(t)
            | AgentError::ParseFailure { transcript: t, .. }
            | AgentError::Timeout { transcript: t, .. }
            | AgentError::Provider { transcript: t, .. } => Some(*t),
            AgentError::React(e) => Some(e.into_transcript()),
            AgentError::Retrieval(_) => None,
        }
    }

    /// Worth one more attempt: the model answered, just not usefully.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            AgentError::SummarizationFailure(_)
                | AgentError::ParseFailure { .. }
                | AgentError::React(ReactError::IterationLimit(_))
        )
    }
}

/// Summarizes one hunk. No tools; the answer is the summary.
pub fn summarize_change(
    change: &CodeChange,
    provider: &dyn ChatProvider,
    settings: &AgentSettings,
    deadline: Deadline,
) -> Result<(String, AgentTranscript), AgentError> {
    let spec = AgentSpec::new("code-summarizer", prompts::summarizer(settings.verbosity))
        .with_limits(settings.max_iterations, settings.per_prompt_timeout);
    let input = format!("Code change in {}:\n```diff\n{}```", change.file_path, change.rendered_text);
    let (answer, transcript) = run_react(&spec, &input, provider, &mut [], deadline)?;
    let summary = answer.trim().to_string();
    if summary.is_empty() {
        return Err(AgentError::SummarizationFailure(Box::new(transcript)));
    }
    Ok((summary, transcript))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaintenanceDecision {
    pub needed: bool,
    pub explanation: String,
}

fn verdict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?is)^[\s*_#>]*(?:(?:verdict|answer|decision)[\s*]*:[\s*]*)?(yes|no)\b[*_]*(.*)$").unwrap()
    })
}

fn explanation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)explanation[\s*]*:").unwrap())
}

const SEPARATORS: &[char] = &['-', '\u{2014}', '\u{2013}', ':', '.', ',', ';', '!'];

/// Reads `YES`/`NO` and an explanation. `None` when the reply is ambiguous,
/// including a `NO` without any explanation.
pub fn parse_verdict(text: &str) -> Option<MaintenanceDecision> {
    let text = text.trim();
    let caps = verdict_re().captures(text)?;
    let needed = caps[1].eq_ignore_ascii_case("yes");
    let rest = caps.get(2).map_or("", |m| m.as_str());
    let explanation = if let Some(m) = explanation_re().find(text) {
        text[m.end()..].trim().to_string()
    } else {
        let after = rest.trim_start_matches([' ', '\t']);
        if after.is_empty() || after.starts_with(SEPARATORS) || after.starts_with(['\n', '\r']) {
            after.trim_matches(|c: char| c.is_whitespace() || SEPARATORS.contains(&c)).to_string()
        } else {
            // "No test maintenance is needed ..." reads as a sentence.
            text.to_string()
        }
    };
    if !needed && explanation.is_empty() {
        return None;
    }
    Some(MaintenanceDecision { needed, explanation })
}

/// One LLM call deciding whether `summary` (and optionally the hunk)
/// requires test maintenance. An unreadable reply is re-asked once.
pub fn decide_maintenance(
    summary: &str,
    change: Option<&CodeChange>,
    provider: &dyn ChatProvider,
    settings: &AgentSettings,
    deadline: Deadline,
) -> Result<(MaintenanceDecision, AgentTranscript), AgentError> {
    const AGENT: &str = "maintenance-decider";
    let mut transcript = AgentTranscript::new(AGENT);
    let mut input = format!("Summary of the code change:\n{summary}\n");
    if let Some(change) = change {
        let _ = write!(input, "\nThe change itself ({}):\n```diff\n{}```\n", change.file_path, change.rendered_text);
    }
    let mut messages = vec![ChatMessage::user(input)];
    let system_prompt = prompts::decider(settings.verbosity);
    let attempts = settings.max_iterations.clamp(1, 2);
    let mut last_raw = String::new();

    while transcript.model_calls < attempts {
        let Some(timeout) = deadline.clamp(settings.per_prompt_timeout) else {
            transcript.outcome = Outcome::Timeout;
            return Err(AgentError::Timeout { agent: AGENT.into(), transcript: Box::new(transcript) });
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
        let reply = match complete(provider, &request) {
            Ok(r) if started.elapsed() <= timeout => r.text,
            Ok(_) | Err(LlmError::TimeoutExceeded(_)) => {
                transcript.outcome = Outcome::Timeout;
                return Err(AgentError::Timeout { agent: AGENT.into(), transcript: Box::new(transcript) });
            }
            Err(source) => {
                transcript.outcome = Outcome::ProviderError;
                return Err(AgentError::Provider { agent: AGENT.into(), source, transcript: Box::new(transcript) });
            }
        };
        if let Some(decision) = parse_verdict(&reply) {
            transcript.steps.push(ReactStep {
                thought: String::new(),
                action: Action::FinalAnswer(reply),
                observation: None,
            });
            transcript.outcome = Outcome::Answered;
            return Ok((decision, transcript));
        }
        transcript.format_failures.push(reply.clone());
        messages.push(ChatMessage::assistant(reply.clone()));
        messages.push(ChatMessage::user(prompts::decider_reask()));
        transcript.reminders_issued += 1;
        last_raw = reply;
    }
    transcript.outcome = Outcome::IterationLimit;
    Err(AgentError::ParseFailure { raw: last_raw, transcript: Box::new(transcript) })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuggestion {
    /// Absent for `SuggestNew`, and for a review advice no test could be
    /// tied to.
    pub test_id: Option<TestId>,
    pub stance: Stance,
    pub confidence_phrase: String,
    pub rationale: String,
}

#[derive(Debug, Clone)]
pub struct Localization {
    pub answer: String,
    pub names: ExtractedNames,
    pub suggestions: Vec<TestSuggestion>,
    /// Initial similarity candidates.
    pub candidates: Vec<ScoredTest>,
    /// Every test shown to the agent, initial candidates and tool results.
    pub presented: BTreeSet<TestId>,
    pub transcript: AgentTranscript,
}

const EXCERPT_LINES: usize = 12;

fn format_candidates(index: &VectorIndex, scored: &[ScoredTest]) -> String {
    if scored.is_empty() {
        return "No test cases found.".into();
    }
    let mut out = String::new();
    for (i, s) in scored.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}. {}() in {} ({}), similarity {:.3}",
            i + 1,
            s.test_id.method,
            s.test_id.container,
            s.test_id.file_path,
            s.score
        );
        if let Some(doc) = index.document(&s.test_id) {
            for line in doc.text.lines().take(EXCERPT_LINES) {
                let _ = writeln!(out, "   {line}");
            }
        }
    }
    out
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn mentions_word(text: &str, word: &str) -> bool {
    let bytes = text.as_bytes();
    text.match_indices(word).any(|(i, _)| {
        let before = i.checked_sub(1).map(|j| bytes[j]);
        let after = bytes.get(i + word.len()).copied();
        !before.is_some_and(is_ident_byte) && !after.is_some_and(is_ident_byte)
    })
}

fn strip_list_marker(segment: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^\s*(?:\d+[.)]|[-*\u{2022}])\s+").unwrap());
    re.replace(segment, "").into_owned()
}

/// Turns a localization answer into suggestions.
///
/// Named tests take the stance of the list item or sentence naming them.
/// When the answer names no test but advises a review, the code elements it
/// mentions are mapped to the presented tests whose text refers to them.
pub fn build_suggestions(
    answer: &str,
    names: &ExtractedNames,
    index: &VectorIndex,
    presented: &BTreeSet<TestId>,
) -> Vec<TestSuggestion> {
    let mut out = Vec::new();
    let mut suggest_new = false;
    for m in &names.matched {
        let (stance, phrase) = classify_stance(&m.segment).unwrap_or((Stance::NeedsUpdate, "listed".into()));
        if stance == Stance::SuggestNew {
            suggest_new = true;
            continue;
        }
        out.push(TestSuggestion {
            test_id: Some(m.test_id.clone()),
            stance,
            confidence_phrase: phrase,
            rationale: strip_list_marker(&m.segment),
        });
    }

    let named: BTreeSet<&str> = names.matched.iter().map(|m| m.test_id.method.as_str()).collect();
    for (segment, _) in split_segments(answer) {
        if names.matched.iter().any(|m| m.segment == segment) {
            continue;
        }
        match classify_stance(&segment) {
            Some((Stance::ShouldReview, phrase)) if names.matched.is_empty() => {
                let idents: Vec<&String> = names.identifiers.iter().filter(|i| !named.contains(i.as_str())).collect();
                let mut tied = false;
                for id in presented {
                    let Some(doc) = index.document(id) else { continue };
                    if idents.iter().any(|ident| segment.contains(ident.as_str()) && mentions_word(&doc.text, ident))
                        && !out.iter().any(|s: &TestSuggestion| s.test_id.as_ref() == Some(id))
                    {
                        tied = true;
                        out.push(TestSuggestion {
                            test_id: Some(id.clone()),
                            stance: Stance::ShouldReview,
                            confidence_phrase: phrase.clone(),
                            rationale: segment.clone(),
                        });
                    }
                }
                if !tied {
                    out.push(TestSuggestion {
                        test_id: None,
                        stance: Stance::ShouldReview,
                        confidence_phrase: phrase,
                        rationale: segment.clone(),
                    });
                }
            }
            Some((Stance::SuggestNew, phrase)) if !suggest_new => {
                suggest_new = true;
                out.push(TestSuggestion {
                    test_id: None,
                    stance: Stance::SuggestNew,
                    confidence_phrase: phrase,
                    rationale: segment,
                });
            }
            _ => {}
        }
    }
    if suggest_new && !out.iter().any(|s| s.stance == Stance::SuggestNew) {
        out.push(TestSuggestion {
            test_id: None,
            stance: Stance::SuggestNew,
            confidence_phrase: "new test".into(),
            rationale: answer.trim().to_string(),
        });
    }
    out
}

/// Finds the tests affected by `change`.
///
/// The top-k candidates for `query` are retrieved up front and shown to the
/// agent, which may search again through the `test_retriever` tool. Names
/// in the answer are matched against the index; anything else is reported
/// as unmatched.
#[allow(clippy::too_many_arguments)]
pub fn localize_tests(
    change: &CodeChange,
    summary: &str,
    query: &str,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    provider: &dyn ChatProvider,
    top_k: usize,
    settings: &AgentSettings,
    deadline: Deadline,
) -> Result<Localization, AgentError> {
    let candidates = retrieve_top_k(index, query, top_k, embedder)?;
    let mut presented: BTreeSet<TestId> = candidates.iter().map(|c| c.test_id.clone()).collect();
    let input = format!(
        "Code change in {}:\n```diff\n{}```\n\nSummary:\n{}\n\nCandidate test cases, most similar first:\n{}",
        change.file_path,
        change.rendered_text,
        summary,
        format_candidates(index, &candidates)
    );
    let spec = AgentSpec::new("test-localizer", prompts::localizer(settings.verbosity))
        .with_limits(settings.max_iterations, settings.per_prompt_timeout);

    let mut found: Vec<TestId> = Vec::new();
    let result = {
        let mut tools = [Tool::new(
            "test_retriever",
            "searches the test suite; input is a free-text description of the behaviour to look for",
            |q: &str| {
                let q = if q.trim().is_empty() { query } else { q };
                let hits = retrieve_top_k(index, q, top_k, embedder).map_err(|e| e.to_string())?;
                found.extend(hits.iter().map(|h| h.test_id.clone()));
                Ok(format_candidates(index, &hits))
            },
        )];
        run_react(&spec, &input, provider, &mut tools, deadline)
    };
    presented.extend(found);
    let (answer, transcript) = result?;

    let universe: BTreeSet<TestId> = index.test_ids().cloned().collect();
    let names = extract_test_names(&answer, &universe);
    let suggestions = build_suggestions(&answer, &names, index, &presented);
    Ok(Localization { answer, names, suggestions, candidates, presented, transcript })
}

/// Describes tests with one LLM call each, for summary-mode indexes.
pub struct LlmTestSummarizer<'a> {
    provider: &'a dyn ChatProvider,
    timeout: Duration,
}

impl<'a> LlmTestSummarizer<'a> {
    pub fn new(provider: &'a dyn ChatProvider, timeout: Duration) -> Self {
        Self { provider, timeout }
    }
}

impl TestSummarizer for LlmTestSummarizer<'_> {
    fn summarize_test(&self, test: &TestCase) -> Result<String, String> {
        let request = ChatRequest::new(
            prompts::test_summarizer(),
            format!("Test {} in {}:\n```java\n{}\n```", test.id.short_name(), test.id.file_path, test.body),
        )
        .with_timeout(self.timeout);
        complete(self.provider, &request).map(|r| r.text.trim().to_string()).map_err(|e| e.to_string())
    }
}
