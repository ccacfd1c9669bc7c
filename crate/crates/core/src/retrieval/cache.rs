use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{IndexMode, RetrievalError, VectorIndex};

/// On-disk index store keyed by commit, mode and embedder fingerprint.
///
/// Test summaries are stored per commit next to the indexes so they can be
/// reused when the embedder changes.
#[derive(Debug, Clone)]
pub struct IndexCache {
    dir: PathBuf,
}

impl IndexCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn index_path(&self, commit_id: &str, mode: IndexMode, fingerprint: &str) -> PathBuf {
        let digest = hex::encode(Sha256::digest(fingerprint.as_bytes()));
        self.dir.join(format!("{commit_id}-{mode}-{}.json", &digest[..12]))
    }

    pub fn summaries_path(&self, commit_id: &str) -> PathBuf {
        self.dir.join(format!("{commit_id}-summaries.json"))
    }

    pub fn load(
        &self,
        commit_id: &str,
        mode: IndexMode,
        fingerprint: &str,
    ) -> Result<Option<VectorIndex>, RetrievalError> {
        let path = self.index_path(commit_id, mode, fingerprint);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| cache_err(&path, e))?;
        let index: VectorIndex = serde_json::from_str(&text).map_err(|e| cache_err(&path, e))?;
        Ok(Some(index))
    }

    pub fn store(&self, index: &VectorIndex) -> Result<PathBuf, RetrievalError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| cache_err(&self.dir, e))?;
        let path = self.index_path(&index.commit_id, index.mode, &index.provider_fingerprint);
        let text = serde_json::to_string(index).map_err(|e| cache_err(&path, e))?;
        std::fs::write(&path, text).map_err(|e| cache_err(&path, e))?;
        if index.mode == IndexMode::Summary {
            let summaries: BTreeMap<String, &str> = index
                .documents
                .iter()
                .filter(|d| !d.fallback)
                .map(|d| (d.test_id.to_string(), d.text.as_str()))
                .collect();
            let spath = self.summaries_path(&index.commit_id);
            let text = serde_json::to_string_pretty(&summaries).map_err(|e| cache_err(&spath, e))?;
            std::fs::write(&spath, text).map_err(|e| cache_err(&spath, e))?;
        }
        Ok(path)
    }

    /// Previously generated summaries for `commit_id`, keyed by test id.
    pub fn load_summaries(&self, commit_id: &str) -> BTreeMap<String, String> {
        std::fs::read_to_string(self.summaries_path(commit_id))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> RetrievalError {
    RetrievalError::Cache(format!("{}: {e}", path.display()))
}
