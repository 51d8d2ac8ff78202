use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Mathematical failures that the caller is expected to inspect (a property-(D) fit that
/// does not exist, an inequality with negative margin) are returned as values, not errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("nonpositive weight {value} at node {node:?}")]
    NonPositiveWeight { node: Vec<usize>, value: f64 },

    #[error("function escapes the ball: nonzero value at {point:?}")]
    EscapesBall { point: Vec<f64> },

    #[error("zero norm: {0}")]
    ZeroNorm(&'static str),

    #[error("constant blows up: {0}")]
    Blowup(String),

    #[error("integrability gate fails: {0}")]
    IntegrabilityGate(String),

    #[error("incompatible source: weighted mean {mean:e} exceeds tolerance {tol:e}")]
    IncompatibleSource { mean: f64, tol: f64 },

    #[error("descent did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
