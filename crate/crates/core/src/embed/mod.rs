//! Embedding providers and the cosine projection kernel.
//!
//! Every provider returns unit-norm vectors. Three backends ship:
//! [`HashingEmbedder`] (deterministic signed feature hashing, dependency free),
//! [`VectorStore`] (precomputed vectors from a text file) and
//! [`RemoteEmbedder`] (JSON client with a replay cache).

mod hashing;
mod remote;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hashing::{embed_text, fnv1a64, token_slot, tokenize, HashingEmbedder};
pub use remote::{HttpTransport, RemoteEmbedder, Transport};
pub use store::VectorStore;

/// Vectors whose norm falls below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

const UNIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text contains no tokens")]
    EmptyText,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("no stored vector for key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: expected dimension {expected}, found {found}")]
    BadDimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Unit-norm real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// L2-normalizes `values`. Zero or non-finite input is rejected.
    pub fn normalize(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::ZeroVector);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < ZERO_NORM {
            return Err(EmbedError::ZeroVector);
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbedError;

    /// Already unit-norm input is kept bit for bit so stored vectors
    /// survive a round trip; anything else is normalized.
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        let raw = Self(values);
        if raw.0.iter().all(|v| v.is_finite()) && (raw.norm() - 1.0).abs() <= UNIT_TOLERANCE {
            return Ok(raw);
        }
        Self::normalize(raw.0)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Maps statements to unit vectors. Same text, same vector, for the lifetime
/// of one provider instance.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed(text)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed(text)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<P> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed(text)
    }
}

/// Dot product of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}
