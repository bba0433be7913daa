//! Error types shared across the solver library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix expected to be symmetric positive definite failed to factor.
    #[error("matrix not positive definite in {context} (subdomain {subdomain:?})")]
    NotPositiveDefinite {
        context: &'static str,
        subdomain: Option<usize>,
    },

    /// Symmetric eigenvalue solver did not converge.
    #[error("eigenvalue solver failed in {0}")]
    EigenFailure(&'static str),

    /// A KL mode with (numerically) zero eigenvalue was requested.
    #[error(
        "KL eigenvalue {index} is not positive ({value:e}); mode count exceeds numerical rank"
    )]
    ZeroKlEigenvalue { index: usize, value: f64 },

    /// Operand shapes do not match.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// PCG detected an indefinite operator or preconditioner.
    #[error("{0} breakdown in PCG: nonpositive inner product {1:e}")]
    PcgBreakdown(&'static str, f64),

    /// Invalid experiment configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cache file rejected: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
