//! Block Arnoldi process: `A [V_1 .. V_m] = [V_1 .. V_{m+1}] Hbar_m` with orthonormal blocks.

use nalgebra::DMatrix;

use crate::densela::economic_qr;
use crate::error::{Error, Result};
use crate::operators::{BlockVector, SparseOperator};

/// Relative size of `H_{m+1,m}` below which the Krylov space is treated as invariant.
pub const EXHAUSTION_TOL: f64 = 1e-12;

/// State of the block Arnoldi process after `m` steps.
///
/// `blocks` always holds `V_1 .. V_{m+1}`. After exhaustion the last block is kept only so
/// that `V_{m+1} H_{m+1,m}` still reproduces the (negligible) remainder; it need not be
/// orthogonal to the others.
#[derive(Debug, Clone)]
pub struct BlockArnoldi {
    n: usize,
    r: usize,
    m: usize,
    blocks: Vec<DMatrix<f64>>,
    hbar: DMatrix<f64>,
    gamma: DMatrix<f64>,
    exhausted: bool,
    exhaustion_step: Option<usize>,
    breakdown: bool,
}

impl BlockArnoldi {
    /// Factors `C = V_1 Gamma` (m = 0).
    pub fn init(a: &SparseOperator, c: &BlockVector) -> Result<Self> {
        Self::from_matrix(a, c.as_matrix())
    }

    pub fn from_matrix(a: &SparseOperator, c: &DMatrix<f64>) -> Result<Self> {
        let (n, r) = c.shape();
        if n != a.dim() {
            return Err(Error::DimensionMismatch(format!("C has {n} rows, operator order {}", a.dim())));
        }
        if r == 0 || r > n {
            return Err(Error::InvalidArgument(format!("block width {r} for dimension {n}")));
        }
        if c.norm() == 0.0 {
            return Err(Error::ZeroRightHandSide);
        }
        let qr = economic_qr(c);
        Ok(Self {
            n,
            r,
            m: 0,
            blocks: vec![qr.q],
            hbar: DMatrix::zeros(r, 0),
            gamma: qr.r,
            exhausted: false,
            exhaustion_step: None,
            breakdown: false,
        })
    }

    /// One block Arnoldi step with twice-applied classical Gram–Schmidt.
    pub fn extend(&mut self, a: &SparseOperator) -> Result<()> {
        if self.exhausted || self.breakdown {
            return Err(Error::AlreadyExhausted(self.m));
        }
        let (n, r, m) = (self.n, self.r, self.m);
        let mut w = a.apply_matrix(&self.blocks[m])?;
        let w_norm = w.norm();
        let k = m + 1;
        let mut coeff = DMatrix::<f64>::zeros(k * r, r);
        for _pass in 0..2 {
            let proj: Vec<DMatrix<f64>> = self.blocks.iter().map(|v| v.tr_mul(&w)).collect();
            for (i, (v, c)) in self.blocks.iter().zip(&proj).enumerate() {
                w -= v * c;
                let mut dst = coeff.view_mut((i * r, 0), (r, r));
                dst += c;
            }
        }
        let qr = economic_qr(&w);

        let mut hbar = std::mem::replace(&mut self.hbar, DMatrix::zeros(0, 0));
        hbar = hbar.resize((k + 1) * r, k * r, 0.0);
        hbar.view_mut((0, m * r), (k * r, r)).copy_from(&coeff);
        hbar.view_mut((k * r, m * r), (r, r)).copy_from(&qr.r);
        self.hbar = hbar;
        self.m = k;

        let scale = self.hbar.norm();
        let sub = qr.r.norm();
        let mut vnext = qr.q;
        if sub <= EXHAUSTION_TOL * scale || k * r >= n {
            self.exhausted = true;
            self.exhaustion_step = Some(k);
        } else {
            // Relative to this step's A V_m: the global scale misreads legitimately small
            // directions as rank loss when the spectrum spans many orders of magnitude.
            let diag_tol = EXHAUSTION_TOL * w_norm;
            let deficient: Vec<usize> = (0..r).filter(|&j| qr.r[(j, j)].abs() <= diag_tol).collect();
            if !deficient.is_empty() {
                // The remainder lost rank: no further block extension is meaningful.
                self.breakdown = true;
                self.reorthogonalize(&mut vnext, &deficient);
            }
        }
        self.blocks.push(vnext);
        Ok(())
    }

    /// Replaces the columns of `v` listed in `cols` by unit vectors orthogonal to every stored
    /// block and to the other columns of `v`, where the dimension allows it. Candidates are
    /// the column itself, then the coordinate vectors in order.
    fn reorthogonalize(&self, v: &mut DMatrix<f64>, cols: &[usize]) {
        let n = self.n;
        for &j in cols {
            let candidates = std::iter::once(v.column(j).into_owned())
                .chain((0..n).map(|i| nalgebra::DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 })));
            for mut x in candidates {
                for _pass in 0..2 {
                    for b in &self.blocks {
                        let c = b.tr_mul(&x);
                        x -= b * c;
                    }
                    for l in 0..v.ncols() {
                        if l != j {
                            let c = v.column(l).dot(&x);
                            x -= v.column(l) * c;
                        }
                    }
                }
                let nrm = x.norm();
                if nrm > 0.5 {
                    v.set_column(j, &(x / nrm));
                    break;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn block_size(&self) -> usize {
        self.r
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.m
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn exhaustion_step(&self) -> Option<usize> {
        self.exhaustion_step
    }

    /// The remainder lost rank without vanishing; extension is refused from here on.
    pub fn is_breakdown(&self) -> bool {
        self.breakdown
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// `(m+1) r x m r` block Hessenberg matrix.
    pub fn hbar(&self) -> &DMatrix<f64> {
        &self.hbar
    }

    /// Leading `m r x m r` part.
    pub fn h_square(&self) -> DMatrix<f64> {
        let q = self.m * self.r;
        self.hbar.view((0, 0), (q, q)).into_owned()
    }

    /// `H_{m+1,m}`, the trailing `r x r` block.
    pub fn h_last(&self) -> DMatrix<f64> {
        let (q, r) = (self.m * self.r, self.r);
        if self.m == 0 {
            return DMatrix::zeros(r, r);
        }
        self.hbar.view((q, q - r), (r, r)).into_owned()
    }

    /// Basis block `V_i`, 1-based as in the Arnoldi relation.
    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i - 1]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// `[V_1 .. V_k]` as one `n x k r` matrix.
    pub fn basis(&self, k: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, k * self.r);
        for (i, b) in self.blocks.iter().take(k).enumerate() {
            out.view_mut((0, i * self.r), (self.n, self.r)).copy_from(b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::solve_small_lyapunov;
    use crate::operators::{gen_laplacian_2d, seeded_block, Symmetry};

    fn op(d: &DMatrix<f64>) -> SparseOperator {
        SparseOperator::from_dense(d, Symmetry::General).unwrap()
    }

    fn check_invariants(a: &SparseOperator, arn: &BlockArnoldi) {
        let m = arn.steps();
        let k = if arn.is_exhausted() { m } else { m + 1 };
        let v = arn.basis(k);
        let orth = (v.transpose() * &v - DMatrix::<f64>::identity(k * arn.r, k * arn.r)).amax();
        assert!(orth <= 1e-10, "orthogonality {orth}");
        let vm = arn.basis(m);
        let rel = (a.to_dense() * &vm - arn.basis(m + 1) * arn.hbar()).norm();
        assert!(rel <= 1e-10 * a.frobenius_norm(), "Arnoldi relation {rel}");
        for j in 0..m {
            for i in (j + 2) * arn.r..arn.hbar.nrows() {
                for c in j * arn.r..(j + 1) * arn.r {
                    assert_eq!(arn.hbar[(i, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn init_cases() {
        let a = op(&DMatrix::identity(2, 2));
        let arn = BlockArnoldi::from_matrix(&a, &DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        assert_eq!(arn.gamma()[(0, 0)], 1.0);
        assert_eq!(arn.block(1).as_slice(), &[1.0, 0.0]);
        let arn = BlockArnoldi::from_matrix(&a, &DMatrix::from_column_slice(2, 1, &[3.0, 4.0])).unwrap();
        assert!((arn.gamma()[(0, 0)] - 5.0).abs() < 1e-14);
        assert!((arn.block(1)[0] - 0.6).abs() < 1e-15);
        assert!(matches!(BlockArnoldi::from_matrix(&a, &DMatrix::zeros(2, 1)), Err(Error::ZeroRightHandSide)));
    }

    #[test]
    fn invariant_subspace_exhausts_immediately() {
        let a = op(&-DMatrix::<f64>::identity(3, 3));
        let mut arn = BlockArnoldi::from_matrix(&a, &DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        arn.extend(&a).unwrap();
        assert_eq!(arn.hbar()[(0, 0)], -1.0);
        assert_eq!(arn.hbar()[(1, 0)], 0.0);
        assert!(arn.is_exhausted());
        assert_eq!(arn.exhaustion_step(), Some(1));
        assert!(matches!(arn.extend(&a), Err(Error::AlreadyExhausted(1))));
    }

    #[test]
    fn two_by_two_fixture() {
        let a = op(&DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]));
        let mut arn = BlockArnoldi::from_matrix(&a, &DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        arn.extend(&a).unwrap();
        assert!((arn.hbar() - DMatrix::from_column_slice(2, 1, &[-2.0, 1.0])).amax() < 1e-15);
        assert!((arn.block(2) - DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).amax() < 1e-15);
        assert!(!arn.is_exhausted());
    }

    #[test]
    fn laplacian_block_invariants() {
        let a = gen_laplacian_2d(3).unwrap();
        let c = seeded_block(9, 2, 17).unwrap();
        let mut arn = BlockArnoldi::init(&a, &c).unwrap();
        for _ in 0..3 {
            arn.extend(&a).unwrap();
            check_invariants(&a, &arn);
        }
    }

    #[test]
    fn exhaustion_reproduces_exact_solution() {
        for (n, r, seed) in [(12usize, 1usize, 1u64), (21, 3, 2), (30, 2, 3), (40, 4, 4)] {
            let g = seeded_block(n, n, seed + 100).unwrap().into_matrix();
            let a = op(&(&g - g.transpose() - DMatrix::identity(n, n) * (n as f64).sqrt()));
            let c = seeded_block(n, r, seed).unwrap();
            let mut arn = BlockArnoldi::init(&a, &c).unwrap();
            while !arn.is_exhausted() {
                arn.extend(&a).unwrap();
            }
            assert!(arn.steps() <= n.div_ceil(r));
            let m = arn.steps();
            let mut s = DMatrix::zeros(m * r, m * r);
            s.view_mut((0, 0), (r, r)).copy_from(&(arn.gamma() * arn.gamma().transpose()));
            let y = solve_small_lyapunov(&arn.h_square(), &s).unwrap();
            let v = arn.basis(m);
            let x = &v * y * v.transpose();
            let cc = c.as_matrix() * c.as_matrix().transpose();
            let res = (a.to_dense() * &x + &x * a.to_dense().transpose() + &cc).norm();
            assert!(res <= 1e-10 * cc.norm(), "n={n} r={r}: {res}");
        }
    }

    #[test]
    fn deterministic_bases() {
        let a = gen_laplacian_2d(4).unwrap();
        let c = seeded_block(16, 3, 5).unwrap();
        let run = || {
            let mut arn = BlockArnoldi::init(&a, &c).unwrap();
            for _ in 0..3 {
                arn.extend(&a).unwrap();
            }
            arn
        };
        let (x, y) = (run(), run());
        assert_eq!(x.hbar(), y.hbar());
        assert_eq!(x.basis(4), y.basis(4));
    }

    #[test]
    fn rank_deficient_remainder_stops_extension() {
        // A maps the two starting columns into the same new direction.
        let mut d = DMatrix::<f64>::zeros(5, 5);
        d[(2, 0)] = 1.0;
        d[(2, 1)] = 1.0;
        for i in 0..5 {
            d[(i, i)] -= 1.0;
        }
        let a = op(&d);
        let mut c = DMatrix::zeros(5, 2);
        c[(0, 0)] = 1.0;
        c[(1, 1)] = 1.0;
        let mut arn = BlockArnoldi::from_matrix(&a, &c).unwrap();
        arn.extend(&a).unwrap();
        assert!(arn.is_breakdown());
        assert!(!arn.is_exhausted());
        check_invariants(&a, &arn);
        assert!(matches!(arn.extend(&a), Err(Error::AlreadyExhausted(1))));
    }
}
