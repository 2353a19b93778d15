use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * aij));
        }
    }
    out
}

/// Kronecker sum `B ⊕ C = B ⊗ I + I ⊗ C`, refusing results with more than `cap` rows.
pub fn kron_sum(b: &DMatrix<f64>, c: &DMatrix<f64>, cap: usize) -> Result<DMatrix<f64>> {
    let p = b.nrows();
    if !b.is_square() || c.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!("kron_sum of {:?} and {:?}", b.shape(), c.shape())));
    }
    let size = p * p;
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let eye = DMatrix::<f64>::identity(p, p);
    Ok(kron(b, &eye) + kron(&eye, c))
}

/// Column-stacking vectorization.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for an `rows x cols` matrix.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}
