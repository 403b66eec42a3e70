use thiserror::Error;

/// Errors raised by the models, controllers, learner and simulation engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violates its documented range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    /// An input lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A derivative, gradient or state component became NaN or infinite.
    #[error("non-finite value in component {index}")]
    NonFinite { index: usize },

    /// Vector or matrix dimensions do not agree.
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// An API was used out of order (e.g. a stale forward cache).
    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
