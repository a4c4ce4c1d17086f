use thiserror::Error;

/// Errors produced anywhere in the localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape, range, modality).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    /// Training produced a non-finite loss.
    #[error("{stage} diverged at epoch {epoch}")]
    Divergence { stage: String, epoch: usize },
    #[error("search failed: {0}")]
    Search(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
