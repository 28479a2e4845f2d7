//! Deterministic local text embedding.
//!
//! The default embedder is a feature-hashing bag-of-tokens projection:
//! tokens are lowercased alphanumeric runs, each hashed into one of
//! `dimension` buckets, and the vector holds bucket counts. Identical
//! input always yields the identical vector, token order never matters,
//! and no network or model weights are involved, so retrieval tests run
//! offline and reproducibly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GatewayError;

/// Default embedding dimension used across a run.
pub const DEFAULT_EMBED_DIM: usize = 256;

/// A fixed-length real vector produced by an [`Embedder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity in [-1, 1]. Identical vectors compare as
    /// exactly 1.0; zero vectors compare as 0.0.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        if self.values == other.values {
            return if self.l2_norm() > 0.0 { 1.0 } else { 0.0 };
        }
        let dot: f64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum();
        let na = self.l2_norm();
        let nb = other.l2_norm();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Text-to-vector backend. All embedders used within one run must agree
/// on the dimension.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
}

/// Feature-hashing bag-of-tokens embedder.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder {
            dimension: DEFAULT_EMBED_DIM,
        }
    }
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashingEmbedder { dimension }
    }

    fn bucket(&self, token: &str) -> usize {
        let mut hasher = Sha256::new();
        hasher.update(token.as_bytes());
        let out = hasher.finalize();
        let mut raw = [0u8; 8];
        raw.copy_from_slice(&out[..8]);
        (u64::from_be_bytes(raw) % self.dimension as u64) as usize
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            // Pure-symbol input: hash the whole trimmed text so the
            // vector still has positive norm.
            tokens.push(text.trim().to_lowercase());
        }
        let mut values = vec![0.0; self.dimension];
        for token in &tokens {
            values[self.bucket(token)] += 1.0;
        }
        Ok(EmbeddingVector { values })
    }
}
