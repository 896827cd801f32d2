use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// The problem or experiment configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hd_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    pub fn is_config(&self) -> bool {
        matches!(self, BenchError::Config(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<hd_core::LinalgError> for BenchError {
    fn from(e: hd_core::LinalgError) -> Self {
        BenchError::Core(e.into())
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
