use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("empty token sequence")]
    EmptyTokens,

    #[error("degenerate projection: |z| = {0:e}")]
    DegenerateProjection(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("zero vector under cosine similarity")]
    ZeroVector,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("augmentation failed for document {doc} on route {route}: {message}")]
    Augment {
        doc: String,
        route: String,
        message: String,
    },

    #[error("translation provider error: {0}")]
    Provider(String),

    #[error("clustering failed: {0}")]
    Cluster(String),

    #[error("document {0} has no label")]
    MissingLabel(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
