use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("block size {k} does not tile a {height}x{width} grid")]
    Partition { height: usize, width: usize, k: usize },
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("tracker state: {0}")]
    State(String),
    #[error("calibration failed, {} block(s) below minimum history: {blocks:?}", blocks.len())]
    Calibration { blocks: Vec<(usize, usize)> },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
