//! Embedding sources: a JSON-over-HTTP service, a precomputed embedding
//! file, and an in-process lexical hashing baseline.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::matrix::{content_key, load_embeddings, EmbeddingMatrix};
use super::EmbedError;

/// Capability document of a provider.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub name: String,
    pub dim: usize,
    /// Number of layers that can be capped, `None` if unsupported.
    pub max_layers: Option<usize>,
    pub max_tokens: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
    pub normalized: bool,
}

pub trait Provider: Send + Sync {
    /// Stable identifier recorded in provenance and cache keys.
    fn id(&self) -> String;

    fn info(&self) -> Result<ProviderInfo, EmbedError>;

    /// Embeds one batch; vectors come back in request order.
    fn embed_batch(&self, texts: &[String], layer_cap: Option<usize>) -> Result<EmbedResponse, EmbedError>;
}

/// Client for the `/embed` + `/info` wire protocol.
pub struct HttpProvider {
    base_url: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
    layer_cap: Option<usize>,
}

impl HttpProvider {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(Duration::from_secs(600))
            .build();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn fail(&self, e: ureq::Error) -> EmbedError {
        match e {
            ureq::Error::Status(code, resp) => {
                let body = resp.into_string().unwrap_or_default();
                EmbedError::BadResponse(format!("HTTP {code}: {body}"))
            }
            ureq::Error::Transport(t) => EmbedError::ProviderUnreachable {
                url: self.base_url.clone(),
                detail: t.to_string(),
            },
        }
    }
}

impl Provider for HttpProvider {
    fn id(&self) -> String {
        format!("http:{}", self.base_url)
    }

    fn info(&self) -> Result<ProviderInfo, EmbedError> {
        let resp = self
            .agent
            .get(&format!("{}/info", self.base_url))
            .call()
            .map_err(|e| self.fail(e))?;
        resp.into_json().map_err(|e| EmbedError::BadResponse(format!("/info: {e}")))
    }

    fn embed_batch(&self, texts: &[String], layer_cap: Option<usize>) -> Result<EmbedResponse, EmbedError> {
        let resp = self
            .agent
            .post(&format!("{}/embed", self.base_url))
            .send_json(EmbedRequest { texts, layer_cap })
            .map_err(|e| self.fail(e))?;
        resp.into_json().map_err(|e| EmbedError::BadResponse(format!("/embed: {e}")))
    }
}

/// Serves vectors from an embedding file keyed by text hash.
pub struct FileProvider {
    name: String,
    matrix: EmbeddingMatrix,
    index: HashMap<u64, usize>,
}

impl FileProvider {
    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        let matrix = load_embeddings(path)?;
        let index = matrix.row_keys().iter().enumerate().map(|(i, &k)| (k, i)).collect();
        Ok(Self {
            name: format!("file:{}", path.display()),
            matrix,
            index,
        })
    }
}

impl Provider for FileProvider {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn info(&self) -> Result<ProviderInfo, EmbedError> {
        Ok(ProviderInfo {
            name: self.name.clone(),
            dim: self.matrix.dim(),
            max_layers: None,
            max_tokens: None,
        })
    }

    fn embed_batch(&self, texts: &[String], layer_cap: Option<usize>) -> Result<EmbedResponse, EmbedError> {
        if layer_cap.is_some() {
            return Err(EmbedError::LayerCapUnsupported(self.name.clone()));
        }
        let vectors = texts
            .iter()
            .map(|t| {
                let key = content_key(t);
                self.index
                    .get(&key)
                    .map(|&i| self.matrix.row(i).to_vec())
                    .ok_or(EmbedError::MissingEmbedding(key))
            })
            .collect::<Result<_, _>>()?;
        Ok(EmbedResponse {
            dim: self.matrix.dim(),
            vectors,
            normalized: self.matrix.is_normalized(),
        })
    }
}

/// Signed feature hashing of lowercase word unigrams and bigrams with
/// sublinear term weights. Raw (unnormalized) output.
#[derive(Clone, Debug)]
pub struct HashingProvider {
    dim: usize,
}

impl HashingProvider {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "hashing dimension must be positive");
        Self { dim }
    }

    fn bucket(feature: &str) -> (u64, bool) {
        // Toolchain-independent, unlike std's DefaultHasher.
        let v = content_key(feature);
        (v >> 1, v & 1 == 1)
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let mut counts: HashMap<String, u32> = HashMap::new();
        for w in &words {
            *counts.entry(w.clone()).or_default() += 1;
        }
        for pair in words.windows(2) {
            *counts.entry(format!("{} {}", pair[0], pair[1])).or_default() += 1;
        }
        let mut features: Vec<(String, u32)> = counts.into_iter().collect();
        features.sort();
        let mut v = vec![0f32; self.dim];
        // Constant feature keeps empty texts away from the zero vector.
        v[0] = 1e-3;
        for (f, c) in features {
            let (b, neg) = Self::bucket(&f);
            let w = 1.0 + (c as f32).ln();
            v[(b % self.dim as u64) as usize] += if neg { -w } else { w };
        }
        v
    }
}

impl Provider for HashingProvider {
    fn id(&self) -> String {
        format!("hashing:{}", self.dim)
    }

    fn info(&self) -> Result<ProviderInfo, EmbedError> {
        Ok(ProviderInfo {
            name: self.id(),
            dim: self.dim,
            max_layers: None,
            max_tokens: None,
        })
    }

    fn embed_batch(&self, texts: &[String], layer_cap: Option<usize>) -> Result<EmbedResponse, EmbedError> {
        if layer_cap.is_some() {
            return Err(EmbedError::LayerCapUnsupported(self.id()));
        }
        Ok(EmbedResponse {
            dim: self.dim,
            vectors: texts.iter().map(|t| self.embed_one(t)).collect(),
            normalized: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashing_is_deterministic_and_order_free() {
        let p = HashingProvider::new(64);
        assert_eq!(p.embed_one("Alpha beta"), p.embed_one("alpha  BETA"));
        let batch = p.embed_batch(&["x y".into(), "z".into()], None).unwrap();
        assert_eq!(batch.vectors[1], p.embed_one("z"));
        assert!(p.embed_one("").iter().any(|&x| x != 0.0));
    }

    #[test]
    fn hashing_rejects_layer_cap() {
        assert!(matches!(
            HashingProvider::new(8).embed_batch(&["a".into()], Some(4)),
            Err(EmbedError::LayerCapUnsupported(_))
        ));
    }

    #[test]
    fn unreachable_http_provider() {
        let p = HttpProvider::new("http://127.0.0.1:9");
        assert!(matches!(p.info(), Err(EmbedError::ProviderUnreachable { .. })));
    }
}
