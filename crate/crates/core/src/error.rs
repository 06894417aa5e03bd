//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right} ({context})")]
    DimensionMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },

    #[error("matrix is not Hermitian: max |a_ij - conj(a_ji)| = {defect:.3e}")]
    NotHermitian { defect: f64 },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error(
        "Krylov propagation failed to converge: residual {residual:.3e} > tol {tol:.3e} \
         at subspace dimension {subspace}"
    )]
    KrylovNoConvergence {
        residual: f64,
        tol: f64,
        subspace: usize,
    },

    #[error("step ceiling {ceiling} reached in converged evolution; last delta {last_delta:.3e}")]
    StepCeiling { ceiling: usize, last_delta: f64 },

    #[error("invalid argument `{name}`: {message}")]
    InvalidArgument { name: &'static str, message: String },

    #[error("fidelity threshold never reached: max fidelity seen {max_fidelity}")]
    ThresholdNotReached { max_fidelity: f64 },

    #[error("no kink found in fidelity data")]
    NoKink,
}

impl Error {
    pub fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
