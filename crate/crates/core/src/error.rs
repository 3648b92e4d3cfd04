use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum MtarError {
    /// An argument lies outside the domain of a mathematical function or sampler.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix that must be positive definite failed its Cholesky factorization.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Model structure, priors or chain settings are inconsistent with the data.
    #[error("configuration error: {0}")]
    Config(String),

    /// A data or configuration file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A numerical routine failed to produce a finite answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MtarError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        MtarError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        MtarError::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        MtarError::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, MtarError>;
