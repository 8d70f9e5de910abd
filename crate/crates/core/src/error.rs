//! Error type shared by every module.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    /// A NaN or infinity appeared during computation. `epoch` is set when the
    /// failure happened inside a training run.
    #[error("numerics error{}: {message}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    Numerics {
        message: String,
        epoch: Option<usize>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("schema error: missing column `{0}`")]
    Schema(String),

    #[error("support error: {0}")]
    Support(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numerics(message: impl Into<String>) -> Self {
        Error::Numerics {
            message: message.into(),
            epoch: None,
        }
    }
}
