use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// Transport-level failure talking to an embedding service. Retryable.
    #[error("embedding service error: {0}")]
    EmbeddingService(String),

    /// The embedding service answered, but not in the agreed format.
    #[error("embedding protocol error: {0}")]
    Protocol(String),

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    TrainingDiverged { epoch: usize, batch: usize },

    #[error("model file error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether retrying the same call may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::EmbeddingService(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
