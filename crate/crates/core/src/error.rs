use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("backward requires a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("{0}")]
    Invalid(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },

    #[error("unknown config key `{key}`; valid keys are: {valid}")]
    UnknownKey { key: String, valid: String },

    #[error("config key `{key}`: {msg}")]
    ConfigType { key: String, msg: String },

    #[error("non-finite training loss {value} at epoch {epoch}")]
    NonFinite { epoch: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
