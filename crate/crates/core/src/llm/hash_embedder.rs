use super::{Embedder, EmbeddingVector, LlmError};

/// Feature-hashing embedder over identifier sub-word unigrams and bigrams.
///
/// Deterministic across runs and platforms; output vectors are L2-normalised
/// and never zero for non-empty input.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0f64; self.dim];
        let tokens = tokens(text);
        let mut add = |feature: &str| {
            let h = fnv1a(feature.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            values[idx] += sign;
        };
        for tok in &tokens {
            add(tok);
        }
        for pair in tokens.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            let idx = (fnv1a(text.as_bytes()) % self.dim as u64) as usize;
            values[idx] = 1.0;
        } else {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector::new(values.into_iter().map(|v| v as f32).collect())
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl Embedder for HashEmbedder {
    fn fingerprint(&self) -> String {
        format!("hash-ngram-v1-{}", self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lower-cased identifier pieces: `getParameterValue` yields `get`,
/// `parameter`, `value` and `getparametervalue`.
fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric() && c != '_') {
        if word.is_empty() {
            continue;
        }
        let mut pieces = Vec::new();
        let mut current = String::new();
        let chars: Vec<char> = word.chars().collect();
        for (i, &c) in chars.iter().enumerate() {
            let boundary = c == '_'
                || (c.is_uppercase()
                    && i > 0
                    && (chars[i - 1].is_lowercase()
                        || chars.get(i + 1).is_some_and(|n| n.is_lowercase()) && chars[i - 1].is_uppercase()));
            if boundary && !current.is_empty() {
                pieces.push(std::mem::take(&mut current));
            }
            if c != '_' {
                current.extend(c.to_lowercase());
            }
        }
        if !current.is_empty() {
            pieces.push(current);
        }
        if pieces.len() > 1 {
            out.push(word.to_lowercase());
        }
        out.extend(pieces);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
        let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| *x as f64 * *y as f64).sum();
        dot / (a.norm() * b.norm())
    }

    #[test]
    fn identical_inputs_identical_vectors() {
        let e = HashEmbedder::new(64);
        assert_eq!(e.embed_one("parse the config"), e.embed_one("parse the config"));
    }

    #[test]
    fn different_inputs_are_not_parallel() {
        let e = HashEmbedder::default();
        let a = e.embed_one("testParameters checks nested parameters");
        let b = e.embed_one("testConfigLoads verifies DEFAULT_KEY loading");
        assert!(cosine(&a, &b) < 1.0);
    }

    #[test]
    fn batch_keeps_order_and_dim() {
        let e = HashEmbedder::new(32);
        let texts: Vec<String> = ["a", "b c", "d_e"].iter().map(|s| s.to_string()).collect();
        let vs = e.embed(&texts).unwrap();
        assert_eq!(vs.len(), 3);
        assert!(vs.iter().all(|v| v.dim() == 32));
        assert_eq!(vs[1], e.embed_one("b c"));
    }

    #[test]
    fn punctuation_only_text_is_not_zero() {
        let e = HashEmbedder::new(16);
        assert!(e.embed_one("{};").norm() > 0.0);
    }

    #[test]
    fn camel_case_splitting() {
        assert_eq!(tokens("getHTTPValue x_y"), vec!["gethttpvalue", "get", "http", "value", "x_y", "x", "y"]);
    }
}
