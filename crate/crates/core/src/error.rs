use thiserror::Error;

pub type Result<T> = std::result::Result<T, NqsError>;

#[derive(Debug, Error)]
pub enum NqsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("system too large for this routine: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NqsError {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        NqsError::Parse {
            line,
            msg: msg.into(),
        }
    }
}
