//! Exact flat vector index over a commit's test cases, queried by cosine
//! similarity.

mod cache;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{TestCase, TestId};
use crate::llm::{embed, Embedder, EmbeddingVector, LlmError};

pub use cache::IndexCache;

/// Default number of candidates fetched per query.
pub const DEFAULT_TOP_K: usize = 10;

/// What text represents each test in the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMode {
    #[serde(rename = "raw")]
    RawCode,
    Summary,
}

impl fmt::Display for IndexMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexMode::RawCode => "raw",
            IndexMode::Summary => "summary",
        })
    }
}

impl FromStr for IndexMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" | "raw-code" | "code" => Ok(IndexMode::RawCode),
            "summary" => Ok(IndexMode::Summary),
            other => Err(format!("unknown index mode {other:?} (expected raw or summary)")),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RetrievalError {
    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("index was built with embedder {indexed} but queried with {query}")]
    EmbedderMismatch { indexed: String, query: String },
    #[error("embedding failed, index aborted: {0}")]
    EmbeddingFailure(LlmError),
    #[error("summary mode needs a test summarizer")]
    MissingSummarizer,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index cache error: {0}")]
    Cache(String),
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dim() != b.dim() {
        return Err(RetrievalError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(&x, &y)| x as f64 * y as f64).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedDocument {
    pub test_id: TestId,
    pub text: String,
    pub vector: EmbeddingVector,
    pub mode: IndexMode,
    /// Summary mode only: the summary failed and the raw body was indexed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    pub commit_id: String,
    pub mode: IndexMode,
    pub provider_fingerprint: String,
    pub documents: Vec<IndexedDocument>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn contains(&self, id: &TestId) -> bool {
        self.documents.iter().any(|d| &d.test_id == id)
    }

    pub fn document(&self, id: &TestId) -> Option<&IndexedDocument> {
        self.documents.iter().find(|d| &d.test_id == id)
    }

    pub fn test_ids(&self) -> impl Iterator<Item = &TestId> {
        self.documents.iter().map(|d| &d.test_id)
    }
}

/// Produces a natural-language description of one test.
pub trait TestSummarizer: Sync {
    fn summarize_test(&self, test: &TestCase) -> Result<String, String>;
}

impl<F> TestSummarizer for F
where
    F: Fn(&TestCase) -> Result<String, String> + Sync,
{
    fn summarize_test(&self, test: &TestCase) -> Result<String, String> {
        self(test)
    }
}

/// Indexes `tests` in the given mode.
///
/// In summary mode a failed or empty summary falls back to the raw body for
/// that test (recorded in `warnings`); an embedding failure aborts the
/// whole index.
pub fn build_index(
    commit_id: &str,
    tests: &[TestCase],
    mode: IndexMode,
    embedder: &dyn Embedder,
    summarizer: Option<&dyn TestSummarizer>,
) -> Result<VectorIndex, RetrievalError> {
    let mut warnings = Vec::new();
    let mut texts = Vec::with_capacity(tests.len());
    let mut fallbacks = Vec::with_capacity(tests.len());
    for test in tests {
        match mode {
            IndexMode::RawCode => {
                texts.push(test.body.clone());
                fallbacks.push(false);
            }
            IndexMode::Summary => {
                let summarizer = summarizer.ok_or(RetrievalError::MissingSummarizer)?;
                match summarizer.summarize_test(test) {
                    Ok(s) if !s.trim().is_empty() => {
                        texts.push(s.trim().to_string());
                        fallbacks.push(false);
                    }
                    outcome => {
                        let reason = outcome.err().unwrap_or_else(|| "empty summary".into());
                        warnings.push(format!("summary for {} failed ({reason}); indexed raw body", test.id));
                        texts.push(test.body.clone());
                        fallbacks.push(true);
                    }
                }
            }
        }
    }

    let vectors = embed(embedder, &texts).map_err(RetrievalError::EmbeddingFailure)?;
    if vectors.iter().any(|v| v.norm() == 0.0) {
        return Err(RetrievalError::EmbeddingFailure(LlmError::ProviderRejection {
            status: None,
            body: "embedder returned a zero vector".into(),
        }));
    }

    let documents = tests
        .iter()
        .zip(texts)
        .zip(vectors)
        .zip(fallbacks)
        .map(|(((test, text), vector), fallback)| IndexedDocument {
            test_id: test.id.clone(),
            text,
            vector,
            mode,
            fallback,
        })
        .collect();

    Ok(VectorIndex {
        commit_id: commit_id.to_string(),
        mode,
        provider_fingerprint: embedder.fingerprint(),
        documents,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTest {
    pub test_id: TestId,
    pub score: f64,
}

/// Exhaustive cosine ranking: descending score, ties by ascending `TestId`,
/// truncated to `k`.
pub fn retrieve_top_k(
    index: &VectorIndex,
    query_text: &str,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<ScoredTest>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let fingerprint = embedder.fingerprint();
    if fingerprint != index.provider_fingerprint {
        return Err(RetrievalError::EmbedderMismatch {
            indexed: index.provider_fingerprint.clone(),
            query: fingerprint,
        });
    }
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let query = embed(embedder, &[query_text.to_string()]).map_err(RetrievalError::EmbeddingFailure)?.remove(0);
    let mut scored = index
        .documents
        .iter()
        .map(|doc| {
            cosine_similarity(&query, &doc.vector).map(|score| ScoredTest { test_id: doc.test_id.clone(), score })
        })
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.test_id.cmp(&b.test_id)));
    scored.truncate(k);
    Ok(scored)
}
