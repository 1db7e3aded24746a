//! Signed feature hashing over letter/digit tokens.
//!
//! Token `t` contributes `±1` at coordinate `fnv1a64(t) mod d`, negative when
//! bit 63 of the hash is set. The accumulated vector is L2-normalized. The
//! scheme is bit-exact across implementations.

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Maximal runs of Unicode letters and digits, lowercased.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Coordinate and sign contributed by one token.
pub fn token_slot(token: &str, dim: usize) -> (usize, f64) {
    let h = fnv1a64(token.as_bytes());
    let index = (h % dim as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    (index, sign)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut acc = vec![0.0; self.dim];
        for t in &tokens {
            let (i, sign) = token_slot(t, self.dim);
            acc[i] += sign;
        }
        EmbeddingVector::normalize(acc)
    }
}

/// Built-in provider at the default dimension (256).
pub fn embed_text(text: &str) -> Result<EmbeddingVector, EmbedError> {
    HashingEmbedder::default().embed(text)
}
