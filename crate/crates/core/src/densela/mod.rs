//! Dense kernels for the small projected problems.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` (column-major). Vectorization
//! is column stacking, so `vec(B Y C) = (C^T ⊗ B) vec(Y)`.

mod eig;
mod kron;
mod lstsq;
mod lyapunov;
mod qr;
mod schur;

pub use eig::{eig_general, eig_symmetric, EigenPairs, DEFECTIVE_CONDITION};
pub use kron::{kron, kron_sum, unvec, vec};
pub use lstsq::{
    lyapunov_residual_mr, solve_matrix_least_squares, solve_matrix_least_squares_direct, solve_matrix_least_squares_iterative,
    LeastSquaresPath, LeastSquaresSolution,
};
pub use lyapunov::{solve_small_lyapunov, LyapunovSolver};
pub use qr::{economic_qr, Qr};
pub use schur::{real_schur, RealSchur};

use nalgebra::DMatrix;

/// Environment variable overriding [`DenseConfig::dense_cap`].
pub const DENSE_CAP_ENV: &str = "LYAKRYLOV_DENSE_CAP";

/// Caps and tolerances for the dense kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseConfig {
    /// Largest row count of an explicitly assembled Kronecker matrix.
    pub dense_cap: usize,
    /// Relative tolerance of the iterative normal-equation solve.
    pub cg_tol: f64,
    /// The iterative solve stops after `cg_iter_factor * m * r` iterations.
    pub cg_iter_factor: usize,
}

impl Default for DenseConfig {
    fn default() -> Self {
        Self { dense_cap: 4096, cg_tol: 1e-10, cg_iter_factor: 50 }
    }
}

impl DenseConfig {
    /// Defaults, with the dense cap taken from `LYAKRYLOV_DENSE_CAP` when set and valid.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Some(cap) = std::env::var(DENSE_CAP_ENV).ok().and_then(|v| v.trim().parse().ok()) {
            cfg.dense_cap = cap;
        }
        cfg
    }
}

/// Returns `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Reciprocal 2-norm condition number `sigma_min / sigma_max`; zero for singular or empty input.
pub fn rcond(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// Spectral norm (largest singular value).
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}
