use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::Deserialize;

use super::{ChatProvider, ChatRequest, ChatResponse, LlmError};

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedReply {
    Text(String),
    /// Replies after `delay`, or times out if the delay exceeds the request timeout.
    Delayed {
        delay: Duration,
        text: String,
    },
    /// Never replies; the call ends with `TimeoutExceeded` at the request timeout.
    Stall,
    Reject {
        status: u16,
        body: String,
    },
}

#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub pattern: Regex,
    pub reply: String,
}

/// Replays canned responses.
///
/// Queued replies are consumed first, in order. Once the queue is empty the
/// first rule whose pattern matches the flattened request answers. With
/// neither, the call is rejected as "script exhausted". Every request is
/// recorded verbatim.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<ScriptedReply>>,
    rules: Vec<ScriptRule>,
    transcript: Mutex<Vec<ChatRequest>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid rule pattern {pattern:?}: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },
}

#[derive(Deserialize)]
struct ScriptFile {
    #[serde(default)]
    queue: Vec<QueueEntry>,
    #[serde(default)]
    rules: Vec<RuleEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum QueueEntry {
    Text(String),
    Delayed {
        delay_ms: u64,
        text: String,
    },
    Stall {
        #[serde(rename = "stall")]
        _stall: bool,
    },
    Reject {
        status: u16,
        body: String,
    },
}

#[derive(Deserialize)]
struct RuleEntry {
    pattern: String,
    reply: String,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_queue<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let provider = Self::new();
        for r in replies {
            provider.push(ScriptedReply::Text(r.into()));
        }
        provider
    }

    pub fn push(&self, reply: ScriptedReply) {
        self.queue.lock().unwrap().push_back(reply);
    }

    pub fn push_text(&self, text: impl Into<String>) {
        self.push(ScriptedReply::Text(text.into()));
    }

    /// Adds a fallback rule. Patterns use `regex` syntax; prefix `(?s)` to
    /// let `.` cross lines.
    pub fn rule(mut self, pattern: &str, reply: impl Into<String>) -> Result<Self, ScriptError> {
        let compiled =
            Regex::new(pattern).map_err(|source| ScriptError::Pattern { pattern: pattern.to_string(), source })?;
        self.rules.push(ScriptRule { pattern: compiled, reply: reply.into() });
        Ok(self)
    }

    /// Loads `{"queue": [...], "rules": [{"pattern": .., "reply": ..}]}`.
    /// Queue entries are strings, `{"delay_ms", "text"}`, `{"stall": true}`
    /// or `{"status", "body"}`.
    pub fn from_script_file(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let path = path.as_ref();
        let read_err = |message: String| ScriptError::Read { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let file: ScriptFile = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        let mut provider = Self::new();
        for entry in file.queue {
            provider.push(match entry {
                QueueEntry::Text(t) => ScriptedReply::Text(t),
                QueueEntry::Delayed { delay_ms, text } => {
                    ScriptedReply::Delayed { delay: Duration::from_millis(delay_ms), text }
                }
                QueueEntry::Stall { .. } => ScriptedReply::Stall,
                QueueEntry::Reject { status, body } => ScriptedReply::Reject { status, body },
            });
        }
        for rule in file.rules {
            provider = provider.rule(&rule.pattern, rule.reply)?;
        }
        Ok(provider)
    }

    pub fn transcript(&self) -> Vec<ChatRequest> {
        self.transcript.lock().unwrap().clone()
    }

    pub fn calls(&self) -> usize {
        self.transcript.lock().unwrap().len()
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }

    fn next_reply(&self, request: &ChatRequest) -> Option<ScriptedReply> {
        if let Some(reply) = self.queue.lock().unwrap().pop_front() {
            return Some(reply);
        }
        let flat = request.flattened();
        self.rules.iter().find(|r| r.pattern.is_match(&flat)).map(|r| ScriptedReply::Text(r.reply.clone()))
    }
}

impl ChatProvider for ScriptedProvider {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let started = Instant::now();
        // Transcript and queue are locked separately and never held across a sleep.
        self.transcript.lock().unwrap().push(request.clone());
        let reply = self
            .next_reply(request)
            .ok_or_else(|| LlmError::ProviderRejection { status: None, body: "script exhausted".into() })?;
        let text = match reply {
            ScriptedReply::Text(text) => text,
            ScriptedReply::Delayed { delay, text } => {
                if delay > request.timeout {
                    std::thread::sleep(request.timeout);
                    return Err(LlmError::TimeoutExceeded(request.timeout));
                }
                std::thread::sleep(delay);
                text
            }
            ScriptedReply::Stall => {
                std::thread::sleep(request.timeout);
                return Err(LlmError::TimeoutExceeded(request.timeout));
            }
            ScriptedReply::Reject { status, body } => {
                return Err(LlmError::ProviderRejection { status: Some(status), body })
            }
        };
        Ok(ChatResponse { text, usage: None, latency: started.elapsed() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::complete;

    #[test]
    fn replays_queue_then_exhausts() {
        let p = ScriptedProvider::with_queue(["hello"]);
        let req = ChatRequest::new("sys", "hi");
        assert_eq!(complete(&p, &req).unwrap().text, "hello");
        let err = complete(&p, &req).unwrap_err();
        assert!(matches!(err, LlmError::ProviderRejection { ref body, .. } if body == "script exhausted"));
        assert_eq!(p.transcript(), vec![req.clone(), req]);
    }

    #[test]
    fn rules_match_flattened_request() {
        let p = ScriptedProvider::new()
            .rule("(?s)summarizer.*Foo", "about Foo")
            .unwrap()
            .rule("summarizer", "generic")
            .unwrap();
        let a = complete(&p, &ChatRequest::new("You are the summarizer", "class Foo")).unwrap();
        let b = complete(&p, &ChatRequest::new("You are the summarizer", "class Bar")).unwrap();
        assert_eq!((a.text.as_str(), b.text.as_str()), ("about Foo", "generic"));
    }

    #[test]
    fn stall_times_out_at_request_timeout() {
        let p = ScriptedProvider::new();
        p.push(ScriptedReply::Stall);
        let req = ChatRequest::new("s", "u").with_timeout(Duration::from_millis(30));
        let started = Instant::now();
        let err = complete(&p, &req).unwrap_err();
        assert_eq!(err, LlmError::TimeoutExceeded(Duration::from_millis(30)));
        assert!(started.elapsed() < Duration::from_millis(500));
    }

    #[test]
    fn script_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(
            &path,
            r#"{"queue": ["one", {"status": 429, "body": "slow down"}], "rules": [{"pattern": "x", "reply": "ruled"}]}"#,
        )
        .unwrap();
        let p = ScriptedProvider::from_script_file(&path).unwrap();
        let req = ChatRequest::new("x", "y");
        assert_eq!(complete(&p, &req).unwrap().text, "one");
        assert!(matches!(complete(&p, &req).unwrap_err(), LlmError::ProviderRejection { status: Some(429), .. }));
        assert_eq!(complete(&p, &req).unwrap().text, "ruled");
    }
}
