//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by covariance construction, filter training, theory
/// evaluation, optimization, simulation, and the CLI front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric: max |M - M^T| = {max_asymmetry:.3e}")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eigenvalue:.6e} below -{tolerance:.3e}")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("{context}: matrix is numerically singular (condition number {condition:.3e} exceeds {limit:.1e})")]
    Singular {
        context: &'static str,
        condition: f64,
        limit: f64,
    },

    #[error("least-squares system is underdetermined: n = {n} <= d = {d}")]
    Underdetermined { n: usize, d: usize },

    #[error("proportional regime requires n > d, got n = {n}, d = {d}")]
    ProportionalRegime { n: usize, d: usize },

    #[error("fixed-point iteration failed to converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("point lies on a phase boundary ({expression} vanishes)")]
    PhaseBoundary { expression: &'static str },

    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration/validation
    /// failures, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular { .. }
            | Error::Convergence { .. }
            | Error::NonFiniteObjective { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
