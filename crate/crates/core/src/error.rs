use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must agree in length or grid do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular value: {0}")]
    Singular(String),

    /// Least-squares system without regularization is (numerically) rank deficient.
    #[error("ill-conditioned least-squares system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown session {0}")]
    UnknownSession(u64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
