use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("functions belong to different spaces")]
    MismatchedSpace,
    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("unsupported cone: {0}")]
    UnsupportedCone(String),
    #[error("projection did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("no boundary pair available: {0}")]
    Exhausted(String),
    #[error("transform is singular")]
    SingularTransform,
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("lambda {lambda} does not exceed growth bound {bound}")]
    LambdaTooSmall { lambda: f64, bound: f64 },
    #[error("pair is not a boundary pair (pairing {0:e})")]
    NotBoundaryPair(f64),
    #[error("drift does not vanish (norm {0:e})")]
    AlphaNotZero(f64),
    #[error("state norm {norm:e} exceeded cap at step {step}")]
    BlowUp { step: usize, norm: f64 },
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            reason: err.to_string(),
        }
    }

    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
