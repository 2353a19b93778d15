use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The Lyapunov operator `Y -> FY + YF^T` is (numerically) singular.
    #[error("singular Lyapunov operator: min |l_i + l_j| = {min_pair_sum:.3e}, max |l| = {max_modulus:.3e}")]
    SingularOperator { min_pair_sum: f64, max_modulus: f64 },

    #[error("dense size {size} exceeds the configured cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("iterative least-squares solve did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    IterationBudgetExhausted { iterations: usize, residual: f64 },

    #[error("projected matrix is numerically singular (reciprocal condition {rcond:.3e})")]
    SingularProjection { rcond: f64 },

    #[error("right-hand side factor is zero")]
    ZeroRightHandSide,

    #[error("Krylov basis is exhausted at step {0}; no further extension possible")]
    AlreadyExhausted(usize),

    #[error("residual norm radicand is negative ({0:.3e})")]
    NegativeSquare(f64),

    #[error("reference modification has zero norm")]
    ZeroReference,

    #[error("memory budget {mem_max} too small for block size {block_size}")]
    MemoryBudgetTooSmall { mem_max: usize, block_size: usize },

    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),

    #[error("matrix construction failed: {0}")]
    ConstructionFailed(String),

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}: unsupported Matrix Market field or format `{what}`")]
    UnsupportedField { path: PathBuf, what: String },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
