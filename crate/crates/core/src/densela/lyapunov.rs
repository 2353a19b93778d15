//! Small dense Lyapunov equations by real Schur reduction and block back-substitution.

use nalgebra::DMatrix;

use super::schur::{real_schur, RealSchur};
use super::symmetrize;
use crate::error::{Error, Result};

/// Relative threshold on `min |l_i + l_j| / max |l|` below which the operator is singular.
pub const SINGULAR_PAIR_TOL: f64 = 1e-13;

/// Solves `F Y + Y F^T + S = 0` for a symmetric `S`; the result is exactly symmetric.
pub fn solve_small_lyapunov(f: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    LyapunovSolver::new(f)?.solve(s)
}

/// Caches the Schur form of `F` for repeated solves with `F` or `F^T`.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    schur: RealSchur,
    /// Schur form of `F^T`, obtained from `F`'s by index reversal.
    schur_t: RealSchur,
}

impl LyapunovSolver {
    pub fn new(f: &DMatrix<f64>) -> Result<Self> {
        let schur = real_schur(f)?;
        check_pair_sums(&schur)?;
        let schur_t = reversed_transpose(&schur);
        Ok(Self { schur, schur_t })
    }

    pub fn dim(&self) -> usize {
        self.schur.t.nrows()
    }

    /// Solves `F Y + Y F^T + S = 0`.
    pub fn solve(&self, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        solve_with(&self.schur, s)
    }

    /// Solves `F^T Y + Y F + S = 0`.
    pub fn solve_transposed(&self, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        solve_with(&self.schur_t, s)
    }
}

fn check_pair_sums(schur: &RealSchur) -> Result<()> {
    let eigs = schur.eigenvalues();
    if eigs.is_empty() {
        return Ok(());
    }
    let max_modulus = eigs.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    let mut min_pair_sum = f64::INFINITY;
    for (i, a) in eigs.iter().enumerate() {
        for b in &eigs[i..] {
            min_pair_sum = min_pair_sum.min((a + b).norm());
        }
    }
    if min_pair_sum <= SINGULAR_PAIR_TOL * max_modulus || max_modulus == 0.0 {
        return Err(Error::SingularOperator { min_pair_sum, max_modulus });
    }
    Ok(())
}

/// `F^T = (Q P)(P T^T P)(Q P)^T` with `P` the reversal permutation; `P T^T P` is again
/// upper quasi-triangular.
fn reversed_transpose(s: &RealSchur) -> RealSchur {
    let n = s.t.nrows();
    let t = DMatrix::from_fn(n, n, |i, j| s.t[(n - 1 - j, n - 1 - i)]);
    let q = DMatrix::from_fn(n, n, |i, j| s.q[(i, n - 1 - j)]);
    let mut blocks: Vec<(usize, usize)> = s.blocks.iter().map(|&(st, size)| (n - st - size, size)).collect();
    blocks.reverse();
    RealSchur { q, t, blocks }
}

fn solve_with(schur: &RealSchur, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = schur.t.nrows();
    if s.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("Lyapunov right-hand side {:?} for order {n}", s.shape())));
    }
    let q = &schur.q;
    let w = -(q.transpose() * s * q);
    let z = solve_quasi_triangular(&schur.t, &schur.blocks, &w)?;
    Ok(symmetrize(&(q * z * q.transpose())))
}

/// Solves `T Z + Z T^T = W` for upper quasi-triangular `T`.
///
/// Column blocks are taken last to first. The coupling through `Z T^T` is one matrix
/// product per column block, and the coupling through `T Z` is applied as column updates
/// once each diagonal block of the column is known.
fn solve_quasi_triangular(t: &DMatrix<f64>, blocks: &[(usize, usize)], w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let mut z = DMatrix::<f64>::zeros(n, n);
    for &(js, jb) in blocks.iter().rev() {
        let jend = js + jb;
        let mut rhs = w.columns(js, jb).into_owned();
        if jend < n {
            rhs -= z.columns(jend, n - jend) * t.view((js, jend), (jb, n - jend)).transpose();
        }
        for &(is, ib) in blocks.iter().rev() {
            let mut small = [[0.0; 2]; 2];
            for a in 0..ib {
                for b in 0..jb {
                    small[a][b] = rhs[(is + a, b)];
                }
            }
            let sol = solve_block(t, (is, ib), (js, jb), &small)?;
            for a in 0..ib {
                for b in 0..jb {
                    z[(is + a, js + b)] = sol[a][b];
                    if is > 0 {
                        rhs.column_mut(b).rows_mut(0, is).axpy(-sol[a][b], &t.column(is + a).rows(0, is), 1.0);
                    }
                }
            }
        }
    }
    Ok(z)
}

/// Solves `T_ii X + X T_jj^T = R` for blocks of size at most 2 through the
/// Kronecker form `(I ⊗ T_ii + T_jj ⊗ I) vec X = vec R`.
fn solve_block(
    t: &DMatrix<f64>,
    (is, ib): (usize, usize),
    (js, jb): (usize, usize),
    rhs: &[[f64; 2]; 2],
) -> Result<[[f64; 2]; 2]> {
    let dim = ib * jb;
    let mut mat = [[0.0; 4]; 4];
    let mut vecr = [0.0; 4];
    // vec index of X[a][b] is b * ib + a
    for b in 0..jb {
        for a in 0..ib {
            let row = b * ib + a;
            vecr[row] = rhs[a][b];
            for a2 in 0..ib {
                mat[row][b * ib + a2] += t[(is + a, is + a2)];
            }
            for b2 in 0..jb {
                mat[row][b2 * ib + a] += t[(js + b, js + b2)];
            }
        }
    }
    let x = gauss_solve(&mut mat, &mut vecr, dim)
        .ok_or_else(|| Error::SingularOperator { min_pair_sum: 0.0, max_modulus: t.amax() })?;
    let mut out = [[0.0; 2]; 2];
    for b in 0..jb {
        for a in 0..ib {
            out[a][b] = x[b * ib + a];
        }
    }
    Ok(out)
}

fn gauss_solve(m: &mut [[f64; 4]; 4], v: &mut [f64; 4], dim: usize) -> Option<[f64; 4]> {
    for col in 0..dim {
        let piv = (col..dim).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col] == 0.0 {
            return None;
        }
        m.swap(col, piv);
        v.swap(col, piv);
        for row in col + 1..dim {
            let factor = m[row][col] / m[col][col];
            for k in col..dim {
                m[row][k] -= factor * m[col][k];
            }
            v[row] -= factor * v[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..dim).rev() {
        let mut acc = v[row];
        for k in row + 1..dim {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::{kron_sum, unvec, vec};
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn residual(f: &DMatrix<f64>, y: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
        (f * y + y * f.transpose() + s).norm()
    }

    #[test]
    fn scalar_cases() {
        let y = solve_small_lyapunov(&DMatrix::from_element(1, 1, -1.0), &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((y[(0, 0)] - 0.5).abs() < 1e-15);
        let y = solve_small_lyapunov(&DMatrix::from_element(1, 1, -2.5), &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((y[(0, 0)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn diagonal_operator_gives_cauchy_matrix() {
        let f = -DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let s = DMatrix::from_element(4, 4, 1.0);
        let y = solve_small_lyapunov(&f, &s).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((y[(i, j)] - 1.0 / ((i + 1 + j + 1) as f64)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn complex_blocks_and_transposed_solve() {
        let f = DMatrix::from_row_slice(
            4,
            4,
            &[-1.0, 3.0, 0.2, 0.0, -3.0, -1.0, 0.0, 0.4, 0.1, 0.0, -2.0, 5.0, 0.0, 0.3, -5.0, -2.0],
        );
        let s = DMatrix::from_row_slice(4, 4, &[2.0, 1.0, 0.0, 0.5, 1.0, 3.0, 0.2, 0.0, 0.0, 0.2, 1.0, 0.1, 0.5, 0.0, 0.1, 4.0]);
        let solver = LyapunovSolver::new(&f).unwrap();
        let y = solver.solve(&s).unwrap();
        assert!(residual(&f, &y, &s) < 1e-12 * s.norm());
        let yt = solver.solve_transposed(&s).unwrap();
        assert!((f.transpose() * &yt + &yt * &f + &s).norm() < 1e-12 * s.norm());
    }

    #[test]
    fn singular_operator_detected() {
        let f = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        let err = solve_small_lyapunov(&f, &DMatrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::SingularOperator { .. }));
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(solve_small_lyapunov(&rot, &DMatrix::identity(2, 2)).is_err());
    }

    fn stable_random(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        // symmetric part forced negative definite
        let g = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let k = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let skew = (&k - k.transpose()) * 1.5;
        -(g.transpose() * &g) - DMatrix::identity(p, p) * 0.1 + skew
    }

    #[test]
    fn agrees_with_kronecker_oracle_on_random_stable_inputs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for case in 0..200 {
            let p = 1 + case % 12;
            let f = stable_random(p, &mut rng);
            let s0 = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            let s = &s0 + s0.transpose();
            let y = solve_small_lyapunov(&f, &s).unwrap();
            let bound = 1e-11 * 1f64.max(s.norm()).max(f.norm() * y.norm());
            assert!(residual(&f, &y, &s) <= bound, "case {case}");
            assert_eq!(y, y.transpose());

            let big = kron_sum(&f, &f, 4096).unwrap();
            let oracle = unvec(&big.lu().solve(&(-vec(&s))).unwrap(), p, p);
            let err = (&y - &oracle).norm() / oracle.norm().max(1e-300);
            assert!(err < 1e-8, "case {case}: rel err {err}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn residual_bound_holds(p in 1usize..16, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = stable_random(p, &mut rng);
            let c = DMatrix::from_fn(p, 2, |_, _| rng.random_range(-1.0..1.0));
            let s = &c * c.transpose();
            let y = solve_small_lyapunov(&f, &s).unwrap();
            let bound = 1e-11 * 1f64.max(s.norm()).max(f.norm() * y.norm());
            prop_assert!(residual(&f, &y, &s) <= bound);
        }
    }
}
