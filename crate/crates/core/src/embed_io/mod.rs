//! Prompting, embedding acquisition and persistent embedding storage.

mod cache;
mod embed;
mod matrix;
mod prompts;
mod provider;

use thiserror::Error;

pub use cache::EmbeddingCache;
pub use embed::{embed_texts, EmbedOptions, DEFAULT_BATCH_SIZE};
pub use matrix::{content_key, load_embeddings, store_embeddings, EmbeddingMatrix, Provenance, MAGIC};
pub use prompts::{apply_prompt, doc_role, prefix, query_role, FieldRole, PromptMode};
pub use provider::{EmbedResponse, FileProvider, HashingProvider, HttpProvider, Provider, ProviderInfo};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no prompt for task `{task}` and role `{role}`")]
    UnknownTaskRole { task: String, role: String },
    #[error("provider unreachable at {url}: {detail}")]
    ProviderUnreachable { url: String, detail: String },
    #[error("provider returned an invalid response: {0}")]
    BadResponse(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding file has no vector for text hash {0:016x}")]
    MissingEmbedding(u64),
    #[error("provider `{0}` does not support layer capping")]
    LayerCapUnsupported(String),
    #[error("corrupt embedding file {path}: {detail}")]
    CorruptFile { path: String, detail: String },
    #[error("i/o error on {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("row count {rows} does not match key count {keys}")]
    RowKeyMismatch { rows: usize, keys: usize },
}

impl EmbedError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        EmbedError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        }
    }
}
