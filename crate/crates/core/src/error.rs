use thiserror::Error;

/// Errors produced by the analytic and numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed something structurally wrong (empty grid, bad index, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A rate or load lies outside the region where the formula is defined,
    /// typically an unstable system.
    #[error("domain error: {0}")]
    Domain(String),

    /// A modelling assumption required by the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A solver failed (unbracketed root, singular system, no convergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config: {0}")]
    Config(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
