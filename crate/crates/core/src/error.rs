use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid mbr: {0}")]
    InvalidMbr(String),

    #[error("bloom filter parameters differ: (m={m1}, k={k1}) vs (m={m2}, k={k2})")]
    BloomMismatch {
        m1: usize,
        k1: u32,
        m2: usize,
        k2: u32,
    },

    #[error("invalid bloom filter: {0}")]
    InvalidBloom(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("record does not fit schema: {0}")]
    InvalidRecord(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid discrete attribute name {0:?}")]
    InvalidAttribute(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("malformed block {height}: {reason}")]
    MalformedBlock { height: u64, reason: String },

    #[error("stale skip index: {0}")]
    StaleIndex(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
