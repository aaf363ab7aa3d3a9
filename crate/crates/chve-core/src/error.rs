//! Error type shared by every fallible operation in the crate.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes of mesh construction, assembly, linear solves and time steps.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Caller violated a precondition.
    InvalidArgument(String),
    /// A linear solver failed its residual contract.
    SolverFailure {
        context: &'static str,
        residual: f64,
        tolerance: f64,
    },
    /// A nonlinear iteration (Newton or fixed point) did not converge, or an
    /// accepted step violated one of the scheme's guarantees.
    StepFailure {
        context: &'static str,
        detail: String,
    },
    /// An internal consistency check failed; indicates a bug.
    Internal(String),
    /// Evaluation outside the mathematical domain of a constitutive function.
    DomainError(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::SolverFailure {
                context,
                residual,
                tolerance,
            } => write!(
                f,
                "solver failure in {context}: residual {residual:e} exceeds tolerance {tolerance:e}"
            ),
            Error::StepFailure { context, detail } => {
                write!(f, "step failure in {context}: {detail}")
            }
            Error::Internal(msg) => write!(f, "internal error: {msg}"),
            Error::DomainError(msg) => write!(f, "domain error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
