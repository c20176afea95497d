use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Core(#[from] abyss_core::Error),
    #[error(transparent)]
    Nn(#[from] abyss_nn::NnError),
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, step {step}; block EMA map {blocks_y}x{blocks_x}: {ema:?}")]
    NonFinite { epoch: usize, step: usize, blocks_y: usize, blocks_x: usize, ema: Vec<f64> },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> TrainError {
    let path = path.into();
    move |source| TrainError::Io { path, source }
}
