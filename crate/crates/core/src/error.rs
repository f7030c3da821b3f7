use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("PLY parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("point budget exceeded: {requested} points requested, budget is {budget}")]
    Budget { requested: usize, budget: usize },

    #[error("infeasible pose constraints: {0}")]
    Infeasible(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("classifier i/o error: {0}")]
    ClassifierIo(String),

    #[error("motion is not certifiable: {0}")]
    NotCertifiable(String),

    #[error("image format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
