use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::matrix::{content_key, load_embeddings, store_embeddings, EmbeddingMatrix, Provenance};
use super::{embed_texts, EmbedError, EmbedOptions, Provider};

/// On-disk store of embeddings, one file per provider and layer cap.
#[derive(Clone, Debug)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub const ENV_VAR: &'static str = "PATENTEB_CACHE_DIR";

    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Cache rooted at `$PATENTEB_CACHE_DIR`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(Self::ENV_VAR).filter(|v| !v.is_empty()).map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file_for(&self, provider_id: &str, layer_cap: Option<usize>) -> PathBuf {
        let tag = format!("{provider_id}|{layer_cap:?}");
        let digest = Sha256::digest(tag.as_bytes());
        let name: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("{name}.emb"))
    }

    /// Like [`embed_texts`], but reuses stored vectors and persists new ones.
    pub fn embed(&self, provider: &dyn Provider, texts: &[String], opts: &EmbedOptions) -> Result<EmbeddingMatrix, EmbedError> {
        let path = self.file_for(&provider.id(), opts.layer_cap);
        let stored = if path.exists() {
            Some(load_embeddings(&path)?)
        } else {
            None
        };
        let known: HashMap<u64, usize> = stored
            .as_ref()
            .map(|m| m.row_keys().iter().enumerate().map(|(i, &k)| (k, i)).collect())
            .unwrap_or_default();
        let mut missing: Vec<String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for t in texts {
            let k = content_key(t);
            if !known.contains_key(&k) && seen.insert(k) {
                missing.push(t.clone());
            }
        }
        let fresh = if missing.is_empty() {
            None
        } else {
            Some(embed_texts(provider, &missing, opts)?)
        };
        let dim = match (&stored, &fresh) {
            (Some(s), Some(f)) if s.dim() != f.dim() => {
                return Err(EmbedError::DimensionMismatch {
                    expected: s.dim(),
                    got: f.dim(),
                })
            }
            (Some(s), _) => s.dim(),
            (None, Some(f)) => f.dim(),
            (None, None) => provider.info()?.dim,
        };
        let provenance = Provenance {
            provider: provider.id(),
            layer_cap: opts.layer_cap,
            ..Default::default()
        };
        if let Some(f) = &fresh {
            let mut keys: Vec<u64> = stored.as_ref().map(|s| s.row_keys().to_vec()).unwrap_or_default();
            let mut data: Vec<f32> = stored.as_ref().map(|s| s.as_slice().to_vec()).unwrap_or_default();
            keys.extend_from_slice(f.row_keys());
            data.extend_from_slice(f.as_slice());
            fs::create_dir_all(&self.dir).map_err(|e| EmbedError::io(&self.dir, e))?;
            let merged = EmbeddingMatrix::new(dim, data, keys, true, provenance.clone())?;
            let tmp = path.with_extension("emb.tmp");
            store_embeddings(&merged, &tmp)?;
            fs::rename(&tmp, &path).map_err(|e| EmbedError::io(&path, e))?;
        }
        let mut data = Vec::with_capacity(texts.len() * dim);
        let keys: Vec<u64> = texts.iter().map(|t| content_key(t)).collect();
        let fresh_index: HashMap<u64, usize> = fresh
            .as_ref()
            .map(|f| f.row_keys().iter().enumerate().map(|(i, &k)| (k, i)).collect())
            .unwrap_or_default();
        for &k in &keys {
            match (known.get(&k), fresh_index.get(&k)) {
                (Some(&i), _) => data.extend_from_slice(stored.as_ref().expect("stored").row(i)),
                (None, Some(&i)) => data.extend_from_slice(fresh.as_ref().expect("fresh").row(i)),
                (None, None) => unreachable!("every key is stored or fresh"),
            }
        }
        EmbeddingMatrix::new(dim, data, keys, true, provenance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_io::{EmbedResponse, HashingProvider, ProviderInfo};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        inner: HashingProvider,
        calls: AtomicUsize,
    }

    impl Provider for Counting {
        fn id(&self) -> String {
            self.inner.id()
        }
        fn info(&self) -> Result<ProviderInfo, EmbedError> {
            self.inner.info()
        }
        fn embed_batch(&self, texts: &[String], cap: Option<usize>) -> Result<EmbedResponse, EmbedError> {
            self.calls.fetch_add(texts.len(), Ordering::SeqCst);
            self.inner.embed_batch(texts, cap)
        }
    }

    #[test]
    fn second_call_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let p = Counting {
            inner: HashingProvider::new(8),
            calls: AtomicUsize::new(0),
        };
        let texts: Vec<String> = vec!["x".into(), "y".into(), "x".into()];
        let a = cache.embed(&p, &texts, &EmbedOptions::default()).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 2);
        let more: Vec<String> = vec!["y".into(), "z".into()];
        let b = cache.embed(&p, &more, &EmbedOptions::default()).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
        assert_eq!(a.row(1), b.row(0));
        let direct = embed_texts(&p.inner, &texts, &EmbedOptions::default()).unwrap();
        assert_eq!(a.as_slice(), direct.as_slice());
    }
}
