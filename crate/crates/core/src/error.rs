use thiserror::Error;

/// Errors raised by the optimization toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported number of objectives {0} (exact algorithms support at most 4)")]
    UnsupportedDimension(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite after jitter escalation")]
    NotPositiveDefinite,

    #[error("covariance matrix is not positive semidefinite")]
    NotPositiveSemidefinite,

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("method `{0}` does not support black-box constraints")]
    UnsupportedMethod(String),

    #[error("acquisition function is non-finite at every raw candidate")]
    NonFiniteAcquisition,

    #[error("constraint samples are required when the problem has constraints")]
    MissingConstraints,

    #[error("sobol sequence supports at most {max} dimensions, requested {requested}")]
    SobolDimension { requested: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
