use std::collections::HashMap;
use std::path::Path;

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::model::Hypothesis;

/// Precomputed vectors keyed by string.
///
/// File format: one `key<TAB>v1,v2,...,vd` entry per line, UTF-8. Blank lines
/// and lines starting with `#` are skipped. Every vector must share the
/// dimension of the first one and is re-normalized on load.
#[derive(Debug, Clone, Default)]
pub struct VectorStore {
    dim: usize,
    vectors: HashMap<String, EmbeddingVector>,
}

impl VectorStore {
    pub fn parse(source: &str) -> Result<Self, EmbedError> {
        let mut store = Self::default();
        for (idx, raw) in source.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let (key, values) = trimmed.split_once('\t').ok_or_else(|| EmbedError::Parse {
                line,
                message: "expected `key<TAB>values`".into(),
            })?;
            let values = values
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| EmbedError::Parse {
                        line,
                        message: format!("bad number `{}`: {e}", v.trim()),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if store.vectors.is_empty() {
                store.dim = values.len();
            } else if values.len() != store.dim {
                return Err(EmbedError::BadDimension {
                    line,
                    expected: store.dim,
                    found: values.len(),
                });
            }
            let v = EmbeddingVector::normalize(values)?;
            store.vectors.insert(key.to_string(), v);
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Dimension of the stored vectors, 0 when empty.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn lookup(&self, key: &str) -> Result<&EmbeddingVector, EmbedError> {
        self.vectors
            .get(key)
            .ok_or_else(|| EmbedError::UnknownKey(key.to_string()))
    }

    /// Fills `embedding` on every hypothesis whose id has a stored vector.
    pub fn attach(&self, hypotheses: &mut [Hypothesis]) {
        for h in hypotheses {
            if let Some(v) = self.vectors.get(&h.id) {
                h.embedding = Some(v.clone());
            }
        }
    }
}

/// Serves the vector stored under the exact statement text.
impl EmbeddingProvider for VectorStore {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        self.lookup(text).cloned()
    }
}
