use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (subject {subject}): {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        subject: String,
        detail: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] repsense_core::Error),

    #[error(transparent)]
    Model(#[from] repsense_model::ModelError),
}

impl TrainError {
    pub fn param(msg: impl Into<String>) -> Self {
        Self::Parameter(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
