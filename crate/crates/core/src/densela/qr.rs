use nalgebra::DMatrix;

/// Thin QR factors `B = Q R`.
#[derive(Debug, Clone)]
pub struct Qr {
    /// `n x min(n, k)` with orthonormal columns.
    pub q: DMatrix<f64>,
    /// `min(n, k) x k` upper triangular (trapezoidal when `n < k`) with nonnegative diagonal.
    pub r: DMatrix<f64>,
}

/// Householder QR of an `n x k` matrix with the sign of `R`'s diagonal fixed nonnegative.
///
/// Rank deficiency is not an error: the corresponding diagonal entries of `R` come out
/// (numerically) zero and the matching columns of `Q` are still orthonormal.
pub fn economic_qr(b: &DMatrix<f64>) -> Qr {
    let (n, k) = b.shape();
    let p = n.min(k);
    if p == 0 {
        return Qr { q: DMatrix::zeros(n, 0), r: DMatrix::zeros(0, k) };
    }
    let qr = b.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..p {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    Qr { q, r }
}
