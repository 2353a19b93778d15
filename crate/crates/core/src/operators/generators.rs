use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BlockVector, SparseOperator, Symmetry};
use crate::densela::eig_symmetric;
use crate::error::{Error, Result};

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg.into()))
    }
}

/// `T / h^2` with `T = tridiag(1, -2, 1)` of order `n`, `h = 1 / (n + 1)`.
pub fn gen_laplacian_1d(n: usize) -> Result<SparseOperator> {
    require(n >= 1, "laplacian_1d needs n >= 1")?;
    let h = 1.0 / (n + 1) as f64;
    let s = 1.0 / (h * h);
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        t.push((i, i, -2.0 * s));
        if i + 1 < n {
            t.push((i, i + 1, s));
            t.push((i + 1, i, s));
        }
    }
    SparseOperator::from_triplets(n, &t, Symmetry::Symmetric)
}

/// Five-point Dirichlet Laplacian `(T ⊕ T) / h^2` on an `N x N` interior grid.
pub fn gen_laplacian_2d(grid: usize) -> Result<SparseOperator> {
    require(grid >= 1, "laplacian_2d needs N >= 1")?;
    let h = 1.0 / (grid + 1) as f64;
    let s = 1.0 / (h * h);
    let n = grid * grid;
    let idx = |i: usize, j: usize| i + grid * j;
    let mut t = Vec::with_capacity(5 * n);
    for j in 0..grid {
        for i in 0..grid {
            let k = idx(i, j);
            t.push((k, k, -4.0 * s));
            if i > 0 {
                t.push((k, idx(i - 1, j), s));
            }
            if i + 1 < grid {
                t.push((k, idx(i + 1, j), s));
            }
            if j > 0 {
                t.push((k, idx(i, j - 1), s));
            }
            if j + 1 < grid {
                t.push((k, idx(i, j + 1), s));
            }
        }
    }
    SparseOperator::from_triplets(n, &t, Symmetry::Symmetric)
}

/// Central differences for `eps Δu - w·∇u`, `w = (1, 1, 1)`, on the unit cube with
/// Dirichlet boundary; grid index `i + N j + N^2 k`.
pub fn gen_conv_diff_3d(grid: usize, eps: f64) -> Result<SparseOperator> {
    require(grid >= 1, "conv_diff_3d needs N >= 1")?;
    require(eps > 0.0 && eps.is_finite(), "conv_diff_3d needs eps > 0")?;
    let h = 1.0 / (grid + 1) as f64;
    let diff = eps / (h * h);
    let conv = 1.0 / (2.0 * h);
    let n = grid * grid * grid;
    let idx = |c: [usize; 3]| c[0] + grid * c[1] + grid * grid * c[2];
    let mut t = Vec::with_capacity(7 * n);
    for k in 0..grid {
        for j in 0..grid {
            for i in 0..grid {
                let c = [i, j, k];
                let row = idx(c);
                t.push((row, row, -6.0 * diff));
                for d in 0..3 {
                    if c[d] > 0 {
                        let mut nb = c;
                        nb[d] -= 1;
                        t.push((row, idx(nb), diff + conv));
                    }
                    if c[d] + 1 < grid {
                        let mut nb = c;
                        nb[d] += 1;
                        t.push((row, idx(nb), diff - conv));
                    }
                }
            }
        }
    }
    SparseOperator::from_triplets(n, &t, Symmetry::General)
}

/// `-diag(d)` with `d` logarithmically spaced from 1 to 1e12.
pub fn gen_bad_cond_diag(n: usize) -> Result<SparseOperator> {
    require(n >= 2, "bad_cond_diag needs n >= 2")?;
    let t: Vec<_> = (0..n).map(|i| (i, i, -logspace(0.0, 12.0, n, i))).collect();
    SparseOperator::from_triplets(n, &t, Symmetry::Symmetric)
}

fn logspace(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Perturbation scales tried by [`gen_log_diag`] before giving up.
const LOG_DIAG_RETRIES: usize = 10;

/// Nonnormal `W D W^{-1}` with `D = diag(logspace(0, 2, n))` and unit upper bidiagonal
/// `W = I + s U`, `U` seeded uniform(0, 1) on the first superdiagonal.
///
/// Starts at `s = 0.1` and halves `s` until the symmetric part of the result is positive
/// definite. The spectrum is exactly `D` since `A` is upper triangular with diagonal `D`.
pub fn gen_log_diag(n: usize, seed: u64) -> Result<SparseOperator> {
    require(n >= 2, "log_diag needs n >= 2")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n - 1).map(|_| rng.random::<f64>()).collect();
    let d: Vec<f64> = (0..n).map(|i| logspace(0.0, 2.0, n, i)).collect();
    let mut scale = 0.1;
    for _ in 0..LOG_DIAG_RETRIES {
        let a = log_diag_dense(&d, &u, scale);
        let (eigs, _) = eig_symmetric(&((&a + a.transpose()) * 0.5));
        if eigs[0] > 0.0 {
            return SparseOperator::from_dense(&a, Symmetry::General);
        }
        scale *= 0.5;
    }
    Err(Error::ConstructionFailed(format!(
        "log_diag({n}): symmetric part not positive definite after {LOG_DIAG_RETRIES} scalings"
    )))
}

fn log_diag_dense(d: &[f64], u: &[f64], scale: f64) -> DMatrix<f64> {
    let n = d.len();
    let mut w = DMatrix::<f64>::identity(n, n);
    for i in 0..n - 1 {
        w[(i, i + 1)] = scale * u[i];
    }
    // W^{-1} of a unit upper bidiagonal matrix: entries are signed products of the superdiagonal.
    let mut winv = DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        for i in (0..j).rev() {
            winv[(i, j)] = -w[(i, i + 1)] * winv[(i + 1, j)];
        }
    }
    let mut wd = w.clone();
    for j in 0..n {
        wd.column_mut(j).scale_mut(d[j]);
    }
    let mut a = wd * winv;
    for j in 0..n {
        a[(j, j)] = d[j];
        for i in j + 1..n {
            a[(i, j)] = 0.0;
        }
    }
    a
}

/// Seeded `n x r` block with uniform(0, 1) entries.
pub fn seeded_block(n: usize, r: usize, seed: u64) -> Result<BlockVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BlockVector::new(DMatrix::from_fn(n, r, |_, _| rng.random::<f64>()))
}
