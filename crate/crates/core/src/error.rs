use thiserror::Error;

use crate::ablate::AblateError;
use crate::corpus::CorpusError;
use crate::distill::DistillError;
use crate::domains::DomainError;
use crate::embed_io::EmbedError;
use crate::losses::LossError;
use crate::metrics::MetricError;
use crate::taskgen::TaskgenError;

/// Crate-level error; each module keeps its own error enum.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Taskgen(#[from] TaskgenError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Ablate(#[from] AblateError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
