use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("control path is empty")]
    EmptyPath,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation not supported for group {0}")]
    Unsupported(String),

    #[error("inertia operator is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("non-finite state encountered; last valid time {last_valid_time}")]
    NonFinite { last_valid_time: f64 },

    #[error("energy level {kappa} is not above the critical value {critical}")]
    Subcritical { kappa: f64, critical: f64 },

    #[error("Finsler structures are not defined on the zero vector")]
    ZeroVector,

    #[error("time step {dt} violates the CFL bound; use dt <= {required}")]
    Cfl { dt: f64, required: f64 },

    #[error("did not converge: {0}")]
    NonConvergence(String),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
