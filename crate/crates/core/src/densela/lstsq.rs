//! The minimal-residual projected problem
//!
//! ```text
//! minimize  || Hbar Y [I 0] + [I 0]^T Y Hbar^T + E1 G G^T E1^T ||_F   over symmetric Y.
//! ```
//!
//! Writing `Hbar = [F; B]` with `F` square and `B = H_{m+1,m} E_m^T`, the objective splits
//! into `||F Y + Y F^T + S||_F^2 + 2 ||B Y||_F^2`. Symmetric `Y` is always optimal, so both
//! paths work on symmetric iterates only.

use nalgebra::{DMatrix, DVector};

use super::lyapunov::LyapunovSolver;
use super::{symmetrize, DenseConfig};
use crate::error::{Error, Result};

/// How a least-squares solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeastSquaresPath {
    /// Orthogonal factorization of the assembled Kronecker system.
    Direct,
    /// Preconditioned conjugate gradients on the normal equations.
    Iterative { iterations: usize },
}

#[derive(Debug, Clone)]
pub struct LeastSquaresSolution {
    pub y: DMatrix<f64>,
    /// Attained value of the objective (not squared).
    pub minimum: f64,
    pub path: LeastSquaresPath,
}

struct Split {
    f: DMatrix<f64>,
    b: DMatrix<f64>,
    s: DMatrix<f64>,
}

fn split(hbar: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<Split> {
    let r = gamma.nrows();
    let q = hbar.ncols();
    if !gamma.is_square() || r == 0 || hbar.nrows() != q + r || q % r != 0 {
        return Err(Error::DimensionMismatch(format!("Hbar {:?} with Gamma {:?}", hbar.shape(), gamma.shape())));
    }
    let f = hbar.rows(0, q).into_owned();
    let b = hbar.rows(q, r).into_owned();
    let mut s = DMatrix::zeros(q, q);
    s.view_mut((0, 0), (r, r)).copy_from(&(gamma * gamma.transpose()));
    Ok(Split { f, b, s })
}

/// Value of the minimal-residual objective at `y`.
pub fn lyapunov_residual_mr(hbar: &DMatrix<f64>, gamma: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let Split { f, b, s } = split(hbar, gamma)?;
    if y.shape() != f.shape() {
        return Err(Error::DimensionMismatch(format!("Y {:?} for order {}", y.shape(), f.nrows())));
    }
    Ok(objective(&f, &b, &s, y))
}

fn objective(f: &DMatrix<f64>, b: &DMatrix<f64>, s: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let top = f * y + y * f.transpose() + s;
    let side = b * y;
    (top.norm_squared() + 2.0 * side.norm_squared()).sqrt()
}

/// Chooses the direct path when `(mr)^2 <= dense_cap`, the iterative one otherwise.
///
/// `warm` seeds the iterative path; a smaller leading block is padded with zeros.
pub fn solve_matrix_least_squares(
    hbar: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    cfg: &DenseConfig,
    warm: Option<&DMatrix<f64>>,
) -> Result<LeastSquaresSolution> {
    let q = hbar.ncols();
    if q * q <= cfg.dense_cap {
        return solve_matrix_least_squares_direct(hbar, gamma);
    }
    match solve_matrix_least_squares_iterative(hbar, gamma, cfg, warm) {
        Err(Error::IterationBudgetExhausted { .. }) => Err(Error::CapExceeded { size: q * q, cap: cfg.dense_cap }),
        other => other,
    }
}

/// Index of `(i, j)`, `i <= j`, in the packed upper triangle (column by column).
fn packed(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

/// Dense QR on the half-vectorized system: unknowns `y_ij` for `i <= j`, rows for the upper
/// triangle of the square block (off-diagonal rows weighted by sqrt 2) and for `B Y`
/// (weighted by sqrt 2, it appears twice in the full residual).
pub fn solve_matrix_least_squares_direct(hbar: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<LeastSquaresSolution> {
    let Split { f, b, s } = split(hbar, gamma)?;
    let q = f.nrows();
    let r = b.nrows();
    let nunk = q * (q + 1) / 2;
    let nrows = nunk + r * q;
    let w = std::f64::consts::SQRT_2;
    let row_weight = |i: usize, j: usize| if i == j { 1.0 } else { w };

    let mut a = DMatrix::<f64>::zeros(nrows, nunk);
    let mut support: Vec<(usize, usize)> = Vec::with_capacity(4 * q);
    for l in 0..q {
        for k in 0..=l {
            let col = packed(k, l);
            // image of Y = e_k e_l^T + e_l e_k^T (or e_k e_k^T) under Y -> F Y + Y F^T
            let image = |i: usize, j: usize| -> f64 {
                let d = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
                if k == l {
                    f[(i, k)] * d(j, k) + d(i, k) * f[(j, k)]
                } else {
                    f[(i, k)] * d(j, l) + f[(i, l)] * d(j, k) + d(i, l) * f[(j, k)] + d(i, k) * f[(j, l)]
                }
            };
            support.clear();
            for t in 0..q {
                for c in [k, l] {
                    support.push((t.min(c), t.max(c)));
                }
            }
            support.sort_unstable();
            support.dedup();
            for &(i, j) in &support {
                a[(packed(i, j), col)] = image(i, j) * row_weight(i, j);
            }
            for ai in 0..r {
                let base = nunk + ai;
                a[(base + l * r, col)] += w * b[(ai, k)];
                if k != l {
                    a[(base + k * r, col)] += w * b[(ai, l)];
                }
            }
        }
    }

    let mut rhs = DVector::<f64>::zeros(nrows);
    for j in 0..q {
        for i in 0..=j {
            rhs[packed(i, j)] = -s[(i, j)] * row_weight(i, j);
        }
    }

    let qr = a.qr();
    qr.q_tr_mul(&mut rhs);
    let rmat = qr.r();
    let diag_max = rmat.diagonal().amax();
    let diag_min = rmat.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(diag_min > 1e-14 * diag_max) {
        return Err(Error::SingularProjection { rcond: if diag_max > 0.0 { diag_min / diag_max } else { 0.0 } });
    }
    let sol = rmat.solve_upper_triangular(&rhs.rows(0, nunk).into_owned()).ok_or(Error::SingularProjection { rcond: 0.0 })?;

    let mut y = DMatrix::<f64>::zeros(q, q);
    for j in 0..q {
        for i in 0..=j {
            y[(i, j)] = sol[packed(i, j)];
            y[(j, i)] = sol[packed(i, j)];
        }
    }
    let minimum = objective(&f, &b, &s, &y);
    Ok(LeastSquaresSolution { y, minimum, path: LeastSquaresPath::Direct })
}

/// Preconditioned CG on the normal equations
/// `F^T F Y + Y F^T F + F^T Y F^T + F Y F + J Y + Y J = -(F^T S + S F)`, `J = B^T B`.
///
/// The preconditioner is the inverse of the `J = 0` operator, applied through two small
/// Lyapunov solves; without a usable Schur form of `F` it falls back to the identity.
pub fn solve_matrix_least_squares_iterative(
    hbar: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    cfg: &DenseConfig,
    warm: Option<&DMatrix<f64>>,
) -> Result<LeastSquaresSolution> {
    let Split { f, b, s } = split(hbar, gamma)?;
    let q = f.nrows();
    let j = b.transpose() * &b;
    let ft = f.transpose();
    let ftf = &ft * &f;
    let normal = |y: &DMatrix<f64>| -> DMatrix<f64> {
        let fy = &f * y;
        let fyf = &fy * &f;
        let ftf_y = &ftf * y;
        let jy = &j * y;
        // F^T F Y + Y F^T F + F^T Y F^T + F Y F + J Y + Y J for symmetric Y
        symmetrize(&((&ftf_y + fyf + &jy) * 2.0))
    };
    let precond = LyapunovSolver::new(&f).ok();
    let apply_prec = |x: &DMatrix<f64>| -> DMatrix<f64> {
        match &precond {
            Some(p) => p.solve_transposed(&(-x)).and_then(|z| p.solve(&(-z))).unwrap_or_else(|_| x.clone()),
            None => x.clone(),
        }
    };

    let rhs = -(&ft * &s + &s * &f);
    let bnorm = rhs.norm();
    let mut y = DMatrix::<f64>::zeros(q, q);
    if let Some(w0) = warm {
        let k = w0.nrows().min(q);
        if w0.is_square() {
            y.view_mut((0, 0), (k, k)).copy_from(&w0.view((0, 0), (k, k)));
        }
    }
    if bnorm == 0.0 {
        let y = DMatrix::zeros(q, q);
        let minimum = objective(&f, &b, &s, &y);
        return Ok(LeastSquaresSolution { y, minimum, path: LeastSquaresPath::Iterative { iterations: 0 } });
    }

    let mut res = &rhs - normal(&y);
    let mut z = apply_prec(&res);
    let mut p = z.clone();
    let mut rz = res.dot(&z);
    let budget = cfg.cg_iter_factor * q;
    let mut it = 0;
    let mut rel = res.norm() / bnorm;
    while rel > cfg.cg_tol {
        if it >= budget {
            return Err(Error::IterationBudgetExhausted { iterations: it, residual: rel });
        }
        let ap = normal(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        y += &p * alpha;
        res -= &ap * alpha;
        z = apply_prec(&res);
        let rz_new = res.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
        it += 1;
        rel = res.norm() / bnorm;
    }
    let y = symmetrize(&y);
    let minimum = objective(&f, &b, &s, &y);
    Ok(LeastSquaresSolution { y, minimum, path: LeastSquaresPath::Iterative { iterations: it } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::solve_small_lyapunov;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_hbar(m: usize, r: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let q = m * r;
        let mut h = DMatrix::from_fn(q + r, q, |i, j| {
            // block upper Hessenberg with a stable-ish diagonal
            if i >= j + r + 1 && (i / r) > (j / r) + 1 {
                0.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        });
        for i in 0..q {
            h[(i, i)] -= 3.0;
        }
        h
    }

    #[test]
    fn scalar_fixture() {
        let hbar = DMatrix::from_column_slice(2, 1, &[-2.0, 1.0]);
        let gamma = DMatrix::from_element(1, 1, 1.0);
        let sol = solve_matrix_least_squares_direct(&hbar, &gamma).unwrap();
        assert!((sol.y[(0, 0)] - 2.0 / 9.0).abs() < 1e-14);
        assert!((sol.minimum - 1.0 / 3.0).abs() < 1e-14);
        let cfg = DenseConfig { dense_cap: 0, ..DenseConfig::default() };
        let it = solve_matrix_least_squares(&hbar, &gamma, &cfg, None).unwrap();
        assert!(matches!(it.path, LeastSquaresPath::Iterative { .. }));
        assert!((it.y[(0, 0)] - 2.0 / 9.0).abs() < 1e-10);
    }

    #[test]
    fn exhausted_subspace_reproduces_galerkin() {
        let mut hbar = DMatrix::zeros(5, 4);
        for i in 0..4 {
            hbar[(i, i)] = -((i + 1) as f64);
            if i + 1 < 4 {
                hbar[(i, i + 1)] = 0.3;
            }
        }
        let gamma = DMatrix::from_element(1, 1, 2.0);
        let sol = solve_matrix_least_squares_direct(&hbar, &gamma).unwrap();
        let mut s = DMatrix::zeros(4, 4);
        s[(0, 0)] = 4.0;
        let gal = solve_small_lyapunov(&hbar.rows(0, 4).into_owned(), &s).unwrap();
        assert!((&sol.y - gal).amax() < 1e-12);
        assert!(sol.minimum < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let hbar = DMatrix::zeros(3, 2);
        let gamma = DMatrix::identity(2, 2);
        assert!(matches!(solve_matrix_least_squares_direct(&hbar, &gamma), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn direct_and_iterative_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cfg = DenseConfig::default();
        for case in 0..40 {
            let r = 1 + case % 3;
            let m = 1 + (case / 3) % (20 / r);
            let hbar = random_hbar(m, r, &mut rng);
            let gamma = DMatrix::from_fn(r, r, |i, j| if i <= j { rng.random_range(0.5..1.5) } else { 0.0 });
            let d = solve_matrix_least_squares_direct(&hbar, &gamma).unwrap();
            let it = solve_matrix_least_squares_iterative(&hbar, &gamma, &cfg, None).unwrap();
            let err = (&d.y - &it.y).norm() / d.y.norm();
            assert!(err < 1e-7, "case {case} (m={m}, r={r}): {err}");
            assert!((d.minimum - it.minimum).abs() <= 1e-9 * d.minimum + 1e-12, "case {case}: {} vs {}", d.minimum, it.minimum);
        }
    }

    #[test]
    fn warm_start_is_padded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let hbar = random_hbar(6, 2, &mut rng);
        let gamma = DMatrix::identity(2, 2);
        let cfg = DenseConfig::default();
        let prev = solve_matrix_least_squares_direct(&random_hbar(5, 2, &mut rng), &gamma).unwrap();
        let cold = solve_matrix_least_squares_iterative(&hbar, &gamma, &cfg, None).unwrap();
        let warm = solve_matrix_least_squares_iterative(&hbar, &gamma, &cfg, Some(&prev.y)).unwrap();
        assert!((&cold.y - &warm.y).norm() < 1e-8 * cold.y.norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn minimizer_beats_symmetric_perturbations(m in 1usize..5, r in 1usize..3, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let hbar = random_hbar(m, r, &mut rng);
            let gamma = DMatrix::identity(r, r);
            let sol = solve_matrix_least_squares_direct(&hbar, &gamma).unwrap();
            let q = m * r;
            for _ in 0..5 {
                let e = DMatrix::from_fn(q, q, |_, _| rng.random_range(-1e-3..1e-3));
                let yp = &sol.y + symmetrize(&e);
                let v = lyapunov_residual_mr(&hbar, &gamma, &yp).unwrap();
                prop_assert!(v >= sol.minimum - 1e-13);
            }
        }
    }
}
