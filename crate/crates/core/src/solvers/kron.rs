//! Kronecker-form modification matrices on `vec(Y)`.
//!
//! With `𝗛 = H ⊕ H`, the MR solution satisfies `(𝗛 + 𝗠_MR) vec(Y) = -vec(S)` where
//! `𝗠_MR = 𝗛^{-T} (J ⊕ J)`, and the PMR one uses `𝗠_PMR = (H^{-T} J) ⊕ (H^{-T} J)`.

use nalgebra::DMatrix;

use crate::arnoldi::BlockArnoldi;
use crate::densela::{kron, kron_sum, rcond};
use crate::error::{Error, Result};

use super::SINGULAR_RCOND;

/// `J = E_m H_{m+1,m}^T H_{m+1,m} E_m^T` (`mr x mr`).
pub fn j_matrix(arn: &BlockArnoldi) -> DMatrix<f64> {
    let r = arn.block_size();
    let q = arn.steps() * r;
    let h_last = arn.h_last();
    let mut j = DMatrix::zeros(q, q);
    j.view_mut((q - r, q - r), (r, r)).copy_from(&(h_last.transpose() * &h_last));
    j
}

struct Parts {
    h: DMatrix<f64>,
    /// `𝗛^T` (LU-factored on demand).
    big_t: DMatrix<f64>,
    j: DMatrix<f64>,
}

fn parts(arn: &BlockArnoldi, cap: usize) -> Result<Parts> {
    if arn.steps() == 0 {
        return Err(Error::InvalidArgument("Kronecker forms need at least one Arnoldi step".into()));
    }
    let h = arn.h_square();
    let rc = rcond(&h);
    if !(rc >= SINGULAR_RCOND) {
        return Err(Error::SingularProjection { rcond: rc });
    }
    let big_t = kron_sum(&h, &h, cap)?.transpose();
    Ok(Parts { h, big_t, j: j_matrix(arn) })
}

fn solve_big_t(big_t: DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rc = rcond(&big_t);
    if !(rc >= SINGULAR_RCOND) {
        return Err(Error::SingularProjection { rcond: rc });
    }
    big_t.lu().solve(rhs).ok_or(Error::SingularProjection { rcond: rc })
}

fn h_inv_t_j(h: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    h.transpose().lu().solve(j).ok_or(Error::SingularProjection { rcond: 0.0 })
}

/// `𝗛^{-T} (J ⊕ J)`; refuses when `(mr)^2 > cap`.
pub fn mr_modification_kron(arn: &BlockArnoldi, cap: usize) -> Result<DMatrix<f64>> {
    let p = parts(arn, cap)?;
    let jj = kron_sum(&p.j, &p.j, cap)?;
    solve_big_t(p.big_t, &jj)
}

/// `(H^{-T} J) ⊕ (H^{-T} J)`; refuses when `(mr)^2 > cap`.
pub fn pmr_modification_kron(arn: &BlockArnoldi, cap: usize) -> Result<DMatrix<f64>> {
    let p = parts(arn, cap)?;
    let k = h_inv_t_j(&p.h, &p.j)?;
    kron_sum(&k, &k, cap)
}

/// `𝗛^{-T} (H^{-T} J ⊗ H^T + H^T ⊗ H^{-T} J)`, which equals `𝗠_PMR - 𝗠_MR`.
pub fn pmr_minus_mr_kron(arn: &BlockArnoldi, cap: usize) -> Result<DMatrix<f64>> {
    let p = parts(arn, cap)?;
    let k = h_inv_t_j(&p.h, &p.j)?;
    let ht = p.h.transpose();
    let cross = kron(&k, &ht) + kron(&ht, &k);
    solve_big_t(p.big_t, &cross)
}
