//! Analysis instruments: the Ritz-value function, the PMR/MR distance bound, modification
//! differences, solution spectra and a dense residual oracle.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::arnoldi::BlockArnoldi;
use crate::densela::{eig_general, eig_symmetric, norm2, DEFECTIVE_CONDITION};
use crate::error::{Error, Result};
use crate::operators::SparseOperator;
use crate::solvers::{j_matrix, ProjectedSolution};

/// Largest order accepted by [`dense_residual_oracle`].
pub const DENSE_ORACLE_CAP: usize = 1000;
/// Relative size of `|λ_i + λ_j|` below which the Ritz function is reported infinite.
pub const RITZ_PAIR_TOL: f64 = 1e-14;

/// `f(x, y) = |x^2 + y^2|^2 / |x y (x + y)|^2`.
pub fn ritz_function(x: Complex64, y: Complex64) -> f64 {
    (x * x + y * y).norm_sqr() / (x * y * (x + y)).norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RitzMax {
    Finite(f64),
    /// Some eigenvalue pair nearly sums to zero.
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RitzReport {
    pub value: RitzMax,
    /// The eigenvector matrix of `H` is ill-conditioned; eigenvalues may be inaccurate.
    pub defective: bool,
}

/// Maximum of the Ritz-value function over all eigenvalue pairs of `h`.
pub fn ritz_value_function_max(h: &DMatrix<f64>) -> Result<RitzReport> {
    if !h.is_square() || h.is_empty() {
        return Err(Error::DimensionMismatch(format!("H must be square and nonempty, got {:?}", h.shape())));
    }
    let eig = eig_general(h)?;
    let lam = &eig.values;
    let scale = lam.iter().map(|l| l.norm()).fold(0.0, f64::max);
    if scale == 0.0 || lam.iter().any(|l| l.norm() == 0.0) {
        return Err(Error::SingularProjection { rcond: 0.0 });
    }
    let mut best = 0.0_f64;
    for (i, &x) in lam.iter().enumerate() {
        for &y in &lam[i..] {
            if (x + y).norm() <= RITZ_PAIR_TOL * scale {
                return Ok(RitzReport { value: RitzMax::Infinite, defective: eig.defective });
            }
            best = best.max(ritz_function(x, y));
        }
    }
    Ok(RitzReport { value: RitzMax::Finite(best), defective: eig.defective })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundVariant {
    /// `q_m = ||Q^{-1}||_F^4`.
    Frobenius,
    /// `q_m = 1`, exact for orthogonal eigenvectors.
    Spectral,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundValue {
    Value(f64),
    Unavailable(String),
}

impl BoundValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            BoundValue::Value(v) => Some(*v),
            BoundValue::Unavailable(_) => None,
        }
    }
}

/// `2 m^3 r^4 q_m cbar_m max f` bounding `||𝗠_MR - 𝗠_PMR||_F^2`.
///
/// `cbar_m` maximizes `||Q^* J e_l e_k^T conj(Q)||_max^2` over pairs with `l` or `k` in the last
/// block. For symmetric `h` the eigenvectors come from the symmetric solver. The numerator of
/// `f` uses `(|λ_i|^2 + |λ_j|^2)^2`, which agrees with the Ritz function on real spectra.
pub fn pmr_mr_distance_bound(h: &DMatrix<f64>, j: &DMatrix<f64>, r: usize, variant: BoundVariant) -> Result<BoundValue> {
    let q = h.nrows();
    if !h.is_square() || j.shape() != h.shape() || r == 0 || q % r != 0 || q == 0 {
        return Err(Error::DimensionMismatch(format!("H {:?}, J {:?}, r = {r}", h.shape(), j.shape())));
    }
    let m = q / r;
    let symmetric = (h - h.transpose()).amax() <= 1e-12 * h.amax().max(f64::MIN_POSITIVE);
    let (lam, qm): (Vec<Complex64>, DMatrix<Complex64>) = if symmetric {
        let (vals, vecs) = eig_symmetric(&((h + h.transpose()) * 0.5));
        (vals.iter().map(|v| Complex64::new(*v, 0.0)).collect(), vecs.map(|v| Complex64::new(v, 0.0)))
    } else {
        let eig = eig_general(h)?;
        if eig.defective || !(eig.condition <= DEFECTIVE_CONDITION) {
            return Ok(BoundValue::Unavailable(format!("defective: eigenvector condition {:.3e}", eig.condition)));
        }
        (eig.values, eig.vectors)
    };
    if lam.iter().any(|l| l.norm() == 0.0) {
        return Ok(BoundValue::Unavailable("singular H".into()));
    }

    let qm_factor = match variant {
        BoundVariant::Spectral => 1.0,
        BoundVariant::Frobenius => {
            let Some(inv) = qm.clone().try_inverse() else {
                return Ok(BoundValue::Unavailable("eigenvector matrix not invertible".into()));
            };
            inv.norm_squared().powi(2)
        }
    };

    // D = Q^* J e_l e_k^T conj(Q): entries (Q^* J)_{i l} conj(Q)_{k j}
    let qhj = qm.adjoint() * j.map(|v| Complex64::new(v, 0.0));
    let col_max: Vec<f64> = (0..q).map(|l| qhj.column(l).iter().map(|z| z.norm()).fold(0.0, f64::max)).collect();
    let row_max: Vec<f64> = (0..q).map(|k| qm.row(k).iter().map(|z| z.norm()).fold(0.0, f64::max)).collect();
    let last = q - r..q;
    let mut cbar = 0.0_f64;
    for l in 0..q {
        for k in 0..q {
            if last.contains(&l) || last.contains(&k) {
                cbar = cbar.max((col_max[l] * row_max[k]).powi(2));
            }
        }
    }
    if cbar == 0.0 {
        return Ok(BoundValue::Value(0.0));
    }

    let mut fmax = 0.0_f64;
    for &x in &lam {
        for &y in &lam {
            let den = (x * y * (x + y)).norm_sqr();
            if den == 0.0 {
                return Ok(BoundValue::Unavailable("eigenvalue pair sums to zero".into()));
            }
            fmax = fmax.max((x.norm_sqr() + y.norm_sqr()).powi(2) / den);
        }
    }
    let (mf, rf) = (m as f64, r as f64);
    Ok(BoundValue::Value(2.0 * mf.powi(3) * rf.powi(4) * qm_factor * cbar * fmax))
}

/// `||Ma - Mb||_2 / ||Ma||_2`.
pub fn modification_difference(ma: &DMatrix<f64>, mb: &DMatrix<f64>) -> Result<f64> {
    if ma.shape() != mb.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", ma.shape(), mb.shape())));
    }
    let reference = norm2(ma);
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(norm2(&(ma - mb)) / reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveSemidefinite,
    NegativeSemidefinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub expected: Definiteness,
    /// Eigenvalues with the wrong sign.
    pub violations: usize,
    /// Largest magnitude among wrong-signed eigenvalues, zero if none.
    pub max_violation: f64,
}

impl SpectrumReport {
    /// Violations larger than `rel` times the largest eigenvalue magnitude.
    pub fn violations_above(&self, rel: f64) -> usize {
        let scale = self.min.abs().max(self.max.abs());
        self.wrong_signed().filter(|v| v.abs() > rel * scale).count()
    }

    fn wrong_signed(&self) -> impl Iterator<Item = f64> + '_ {
        let expected = self.expected;
        self.eigenvalues.iter().copied().filter(move |v| match expected {
            Definiteness::PositiveSemidefinite => *v < 0.0,
            Definiteness::NegativeSemidefinite => *v > 0.0,
        })
    }
}

/// Sorted spectrum of the symmetric part of `y` with a sign audit.
pub fn solution_spectrum(y: &DMatrix<f64>, expected: Definiteness) -> Result<SpectrumReport> {
    if !y.is_square() || y.is_empty() {
        return Err(Error::DimensionMismatch(format!("Y must be square and nonempty, got {:?}", y.shape())));
    }
    let (vals, _) = eig_symmetric(&((y + y.transpose()) * 0.5));
    let mut eigenvalues: Vec<f64> = vals.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let mut rep = SpectrumReport {
        min: eigenvalues[0],
        max: eigenvalues[eigenvalues.len() - 1],
        eigenvalues,
        expected,
        violations: 0,
        max_violation: 0.0,
    };
    rep.violations = rep.wrong_signed().count();
    rep.max_violation = rep.wrong_signed().map(f64::abs).fold(0.0, f64::max);
    Ok(rep)
}

/// `||A X + X A^T + C C^T||_F` for `X = sum P_i D_i P_i^T`, evaluated densely.
pub fn dense_residual_oracle(a: &SparseOperator, factors: &[(DMatrix<f64>, DMatrix<f64>)], c: &DMatrix<f64>) -> Result<f64> {
    let n = a.dim();
    if n > DENSE_ORACLE_CAP {
        return Err(Error::CapExceeded { size: n, cap: DENSE_ORACLE_CAP });
    }
    if c.nrows() != n {
        return Err(Error::DimensionMismatch(format!("C has {} rows for order {n}", c.nrows())));
    }
    let mut x = DMatrix::zeros(n, n);
    for (p, d) in factors {
        if p.nrows() != n || d.shape() != (p.ncols(), p.ncols()) {
            return Err(Error::DimensionMismatch(format!("factor P {:?} with D {:?}", p.shape(), d.shape())));
        }
        x += p * d * p.transpose();
    }
    dense_residual(&a.to_dense(), &x, c)
}

/// `||A X + X A^T + C C^T||_F` for dense inputs.
pub fn dense_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if x.shape() != (n, n) || c.nrows() != n {
        return Err(Error::DimensionMismatch(format!("A {:?}, X {:?}, C {:?}", a.shape(), x.shape(), c.shape())));
    }
    let ax = a * x;
    Ok((&ax + ax.transpose() + c * c.transpose()).norm())
}

/// Bundle of per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub ritz: RitzReport,
    pub bound: BoundValue,
    /// `||M_PMR - M_NKS||_2 / ||M_PMR||_2` when an NKS solution was supplied.
    pub m_diff: Option<f64>,
    pub spectrum: SpectrumReport,
}

/// Diagnostics at the current step; `solution` supplies the spectrum and, for PMR, the
/// reference modification.
pub fn diagnose(
    arn: &BlockArnoldi,
    solution: &ProjectedSolution,
    nks: Option<&ProjectedSolution>,
    expected: Definiteness,
    variant: BoundVariant,
) -> Result<DiagnosticsReport> {
    let h = arn.h_square();
    let ritz = ritz_value_function_max(&h)?;
    let bound = pmr_mr_distance_bound(&h, &j_matrix(arn), arn.block_size(), variant)?;
    let m_diff = match nks {
        Some(n) => match modification_difference(&solution.modification, &n.modification) {
            Ok(v) => Some(v),
            Err(Error::ZeroReference) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    let spectrum = solution_spectrum(&solution.y, expected)?;
    Ok(DiagnosticsReport { ritz, bound, m_diff, spectrum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::kron_sum;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn ritz_fixtures() {
        let one = ritz_value_function_max(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert_eq!(one.value, RitzMax::Finite(1.0));
        let two = ritz_value_function_max(&DMatrix::from_element(1, 1, -2.0)).unwrap();
        assert_eq!(two.value, RitzMax::Finite(0.25));
        let pm = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        assert_eq!(ritz_value_function_max(&pm).unwrap().value, RitzMax::Infinite);
    }

    #[test]
    fn ritz_symmetry_and_scaling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = Complex64::new(rng.random_range(-3.0..-0.1), rng.random_range(-2.0..2.0));
            let y = Complex64::new(rng.random_range(-3.0..-0.1), rng.random_range(-2.0..2.0));
            let alpha = rng.random_range(0.1..10.0);
            let f = ritz_function(x, y);
            assert!((f - ritz_function(y, x)).abs() <= 1e-12 * f);
            assert!((ritz_function(x * alpha, y * alpha) - f / (alpha * alpha)).abs() <= 1e-10 * f);
        }
        assert!((ritz_function(c(-2.0), c(-2.0)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bound_scalar_fixture() {
        let h = DMatrix::from_element(1, 1, -2.0);
        let j = DMatrix::from_element(1, 1, 1.0);
        for v in [BoundVariant::Spectral, BoundVariant::Frobenius] {
            assert_eq!(pmr_mr_distance_bound(&h, &j, 1, v).unwrap().value(), Some(0.5));
        }
        assert_eq!(pmr_mr_distance_bound(&h, &DMatrix::zeros(1, 1), 1, BoundVariant::Spectral).unwrap().value(), Some(0.0));
    }

    #[test]
    fn bound_flags_defective() {
        let h = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(pmr_mr_distance_bound(&h, &j, 1, BoundVariant::Frobenius).unwrap(), BoundValue::Unavailable(_)));
    }

    fn assembled_gap(h: &DMatrix<f64>, j: &DMatrix<f64>) -> f64 {
        let big_t = kron_sum(h, h, 10_000).unwrap().transpose();
        let mr = big_t.clone().lu().solve(&kron_sum(j, j, 10_000).unwrap()).unwrap();
        let k = h.transpose().lu().solve(j).unwrap();
        let pmr = kron_sum(&k, &k, 10_000).unwrap();
        (mr - pmr).norm_squared()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn spectral_bound_dominates(m in 1usize..4, r in 1usize..4, seed in any::<u64>()) {
            prop_assume!(m * r <= 9);
            let q = m * r;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
            let h = -(&g * g.transpose()) - DMatrix::identity(q, q) * 0.1;
            let b = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
            let mut j = DMatrix::zeros(q, q);
            j.view_mut((q - r, q - r), (r, r)).copy_from(&(b.transpose() * &b));
            let bound = pmr_mr_distance_bound(&h, &j, r, BoundVariant::Spectral).unwrap().value().unwrap();
            let actual = assembled_gap(&h, &j);
            prop_assert!(actual <= bound * (1.0 + 1e-9) + 1e-14, "actual {actual} bound {bound}");
        }
    }

    #[test]
    fn modification_difference_fixtures() {
        let a = DMatrix::from_element(1, 1, -0.5);
        assert_eq!(modification_difference(&a, &a).unwrap(), 0.0);
        assert!((modification_difference(&a, &DMatrix::from_element(1, 1, -0.25)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(modification_difference(&a, &DMatrix::zeros(1, 1)).unwrap(), 1.0);
        assert!(matches!(modification_difference(&DMatrix::zeros(2, 1), &a), Err(Error::DimensionMismatch(_))));
        assert!(matches!(modification_difference(&DMatrix::zeros(1, 1), &a), Err(Error::ZeroReference)));
    }

    #[test]
    fn spectrum_fixtures() {
        let y = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let rep = solution_spectrum(&y, Definiteness::PositiveSemidefinite).unwrap();
        assert_eq!(rep.eigenvalues, vec![1.0, 2.0]);
        assert_eq!(rep.violations, 0);
        let y = DMatrix::from_diagonal(&DVector::from_vec(vec![-1e-7, 1.0]));
        let rep = solution_spectrum(&y, Definiteness::PositiveSemidefinite).unwrap();
        assert_eq!(rep.violations, 1);
        assert!((rep.max_violation - 1e-7).abs() < 1e-20);
        assert_eq!(rep.violations_above(1e-6), 0);
        let rep = solution_spectrum(&(-y), Definiteness::NegativeSemidefinite).unwrap();
        assert_eq!(rep.violations, 1);
    }

    #[test]
    fn oracle_fixtures() {
        let a = SparseOperator::from_dense(
            &-DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])),
            crate::operators::Symmetry::Symmetric,
        )
        .unwrap();
        let c = DMatrix::from_element(4, 1, 1.0);
        let x = DMatrix::from_fn(4, 4, |i, j| 1.0 / (i + j + 2) as f64);
        assert!(dense_residual_oracle(&a, &[(DMatrix::identity(4, 4), x)], &c).unwrap() <= 1e-12);
        let zero = dense_residual_oracle(&a, &[], &c).unwrap();
        assert!((zero - (&c * c.transpose()).norm()).abs() < 1e-14);

        let s1 = SparseOperator::from_dense(
            &DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]),
            crate::operators::Symmetry::Symmetric,
        )
        .unwrap();
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let res = dense_residual_oracle(&s1, &[(e1.clone(), DMatrix::from_element(1, 1, 0.2))], &e1).unwrap();
        assert!((res - 0.12f64.sqrt()).abs() < 1e-14);

        let big = crate::operators::gen_laplacian_1d(1001).unwrap();
        assert!(matches!(dense_residual_oracle(&big, &[], &DMatrix::zeros(1001, 1)), Err(Error::CapExceeded { .. })));
    }
}
