use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library. The CLI maps variants to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{what} index {index} out of range (size {size})")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("state space of {size} assignments exceeds the enumeration limit of {limit}")]
    StateSpaceTooLarge { size: u128, limit: u128 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("dataset schema violation at dialog {dialog}{}, field `{field}`: {message}",
        round.map(|r| format!(", round {r}")).unwrap_or_default())]
    Schema {
        dialog: usize,
        round: Option<usize>,
        field: &'static str,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint integrity error: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Invalid(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
