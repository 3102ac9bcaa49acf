use thiserror::Error;

/// Errors produced by the operator, estimator and scenario layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} cells, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("objects live on different measure spaces")]
    SpaceMismatch,

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("domain error: map sent {x} to {image}, outside [0, 1)")]
    Domain { x: f64, image: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("horizon error: {0}")]
    Horizon(String),

    #[error("empty basis: {0}")]
    EmptyBasis(&'static str),

    #[error("invariant violation ({check}): {detail}")]
    Invariant { check: String, detail: String },

    #[error("pullback did not converge within K = {k_max} steps (last increment {increment:e})")]
    NotConverged { k_max: usize, increment: f64 },

    #[error("unresolved reference: {0}")]
    UnresolvedReference(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invariant(check: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Invariant {
            check: check.into(),
            detail: detail.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
