//! Chat-completion and embedding backends.
//!
//! [`OpenAiCompatible`] talks to any server exposing the OpenAI chat and
//! embeddings routes. [`ScriptedProvider`] and [`HashEmbedder`] are
//! deterministic stand-ins used by tests, examples and dry runs.

mod hash_embedder;
mod openai;
mod scripted;
mod trace;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use hash_embedder::HashEmbedder;
pub use openai::{OpenAiCompatible, OpenAiEmbedder};
pub use scripted::{ScriptError, ScriptRule, ScriptedProvider, ScriptedReply};
pub use trace::TracingProvider;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    /// Temperature 0 and a 300 s timeout.
    pub fn new(system_prompt: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            messages: vec![ChatMessage::user(user)],
            temperature: 0.0,
            timeout: DEFAULT_TIMEOUT,
            max_tokens: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.timeout.is_zero() {
            return Err(LlmError::InvalidRequest("timeout must be positive".into()));
        }
        Ok(())
    }

    /// System prompt and all messages joined, as matched by script rules.
    pub fn flattened(&self) -> String {
        let mut text = self.system_prompt.clone();
        for m in &self.messages {
            text.push('\n');
            text.push_str(&m.content);
        }
        text
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<Usage>,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum LlmError {
    #[error("no response within {0:?}")]
    TimeoutExceeded(Duration),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider rejected the request (status {status:?}): {body}")]
    ProviderRejection { status: Option<u16>, body: String },
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Chat-completion backend. Implementations must honor `request.timeout`
/// and must not retry on their own.
pub trait ChatProvider: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

/// Validates the request, then delegates to the provider.
pub fn complete(provider: &dyn ChatProvider, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
    request.validate()?;
    provider.complete(request)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }
}

pub trait Embedder: Send + Sync {
    /// Identifies the model and settings; vectors from different
    /// fingerprints are not comparable.
    fn fingerprint(&self) -> String;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError>;
}

impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        (**self).embed(texts)
    }
}

/// Embeds `texts`, checking one vector per input and a constant dimension.
pub fn embed(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
    if texts.iter().any(|t| t.is_empty()) {
        return Err(LlmError::InvalidRequest("cannot embed an empty string".into()));
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = embedder.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(LlmError::ProviderRejection {
            status: None,
            body: format!("{} vectors returned for {} inputs", vectors.len(), texts.len()),
        });
    }
    let expected = vectors[0].dim();
    if let Some(bad) = vectors.iter().find(|v| v.dim() != expected) {
        return Err(LlmError::DimensionMismatch { expected, found: bad.dim() });
    }
    Ok(vectors)
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let ok = ChatRequest::new("s", "u");
        assert_eq!(ok.temperature, 0.0);
        assert_eq!(ok.timeout, Duration::from_secs(300));
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.temperature = -0.1;
        assert!(bad.validate().is_err());
        assert!(ok.with_timeout(Duration::ZERO).validate().is_err());
    }

    struct Ragged;
    impl Embedder for Ragged {
        fn fingerprint(&self) -> String {
            "ragged".into()
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
            Ok(texts.iter().enumerate().map(|(i, _)| EmbeddingVector::new(vec![1.0; i + 1])).collect())
        }
    }

    #[test]
    fn inconsistent_dims_are_rejected() {
        let err = embed(&Ragged, &["a".into(), "b".into()]).unwrap_err();
        assert_eq!(err, LlmError::DimensionMismatch { expected: 1, found: 2 });
    }
}
