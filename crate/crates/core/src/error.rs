use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or table layouts that cannot be interpreted at all.
    #[error("structural error: {0}")]
    Structural(String),
    /// Well-formed input outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Brute-force enumeration would exceed its size guard.
    #[error("capacity guard exceeded: {0}")]
    Capacity(String),
    /// An iterative method produced a non-finite value. The trace holds the
    /// objective history up to the failure.
    #[error("numerical failure: {message}")]
    Numerical { message: String, trace: Vec<f64> },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            trace: Vec::new(),
        }
    }
}
