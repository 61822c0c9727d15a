use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Cholesky factorisation hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    /// A parameter lies outside the domain of a density or moment.
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("batch slice is empty")]
    EmptySlice,
    #[error("class {0} has no tracked distribution yet")]
    UninitializedClass(usize),
    #[error("forward trace does not match the current model parameters")]
    StaleTrace,
    #[error("k = {k} is too large for a set of {m} points")]
    KTooLarge { k: usize, m: usize },
    #[error("class {class} has {have} instances, need at least {need}")]
    InsufficientClassInstances { class: usize, have: usize, need: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
