use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};

/// Posts a JSON body and returns the response body.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, body: &str) -> Result<String, EmbedError>;
}

/// Plain HTTP transport.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, body: &str) -> Result<String, EmbedError> {
        let mut response = ureq::post(url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| EmbedError::Transport(e.to_string()))
    }
}

#[derive(Serialize)]
struct Request<'a> {
    texts: [&'a str; 1],
}

#[derive(Deserialize)]
struct Response {
    vectors: Vec<Vec<f64>>,
}

/// Client for an external embedding service.
///
/// Protocol: `POST {"texts": [...]}` → `{"vectors": [[...], ...]}`. Responses
/// are cached per (endpoint, text) in memory and, when a cache directory is
/// set, on disk under the SHA-256 of the key, so replays never depend on the
/// service answering the same way twice.
pub struct RemoteEmbedder {
    endpoint: String,
    transport: Box<dyn Transport>,
    cache_dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, EmbeddingVector>>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self::with_transport(endpoint, Box::new(HttpTransport))
    }

    pub fn with_transport(endpoint: impl Into<String>, transport: Box<dyn Transport>) -> Self {
        Self {
            endpoint: endpoint.into(),
            transport,
            cache_dir: None,
            memory: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn cache_key(&self, text: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.endpoint.as_bytes());
        hasher.update([0u8]);
        hasher.update(text.as_bytes());
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn read_disk(&self, key: &str) -> Option<EmbeddingVector> {
        let path = self.cache_dir.as_ref()?.join(format!("{key}.json"));
        let raw = fs::read_to_string(path).ok()?;
        serde_json::from_str(&raw).ok()
    }

    fn write_disk(&self, key: &str, v: &EmbeddingVector) -> Result<(), EmbedError> {
        let Some(dir) = &self.cache_dir else {
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!("{key}.json.tmp"));
        // serializing a Vec<f64> cannot fail
        fs::write(&tmp, serde_json::to_string(v).expect("vector serializes"))?;
        fs::rename(tmp, dir.join(format!("{key}.json")))?;
        Ok(())
    }

    fn fetch(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let body = serde_json::to_string(&Request { texts: [text] }).expect("request serializes");
        let raw = self.transport.post_json(&self.endpoint, &body)?;
        let response: Response = serde_json::from_str(&raw).map_err(|e| EmbedError::BadResponse(e.to_string()))?;
        let mut vectors = response.vectors;
        if vectors.len() != 1 {
            return Err(EmbedError::BadResponse(format!(
                "expected 1 vector, got {}",
                vectors.len()
            )));
        }
        EmbeddingVector::normalize(vectors.pop().unwrap_or_default())
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let key = self.cache_key(text);
        // held across the fetch: one request per key even under contention
        let mut memory = self.memory.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(v) = memory.get(&key) {
            return Ok(v.clone());
        }
        if let Some(v) = self.read_disk(&key) {
            memory.insert(key, v.clone());
            return Ok(v);
        }
        let v = self.fetch(text)?;
        self.write_disk(&key, &v)?;
        memory.insert(key, v.clone());
        Ok(v)
    }
}
