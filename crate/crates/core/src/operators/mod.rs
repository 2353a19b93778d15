//! Sparse coefficient matrices, block right-hand sides, test-problem generators and
//! Matrix Market exchange.

mod generators;
mod mmio;

pub use generators::{gen_bad_cond_diag, gen_conv_diff_3d, gen_laplacian_1d, gen_laplacian_2d, gen_log_diag, seeded_block};
pub use mmio::{
    read_dense_matrix_market, read_matrix_market, read_sparse_matrix_market, write_dense_matrix_market,
    write_sparse_matrix_market,
};

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Structural symmetry declared for a sparse matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    Symmetric,
    General,
}

/// Square real matrix in compressed sparse row form.
///
/// Products are counted: `matvecs` is the number of single-vector products applied so far and
/// `cost` accumulates `nnz * r` per block product.
#[derive(Debug)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetry: Symmetry,
    matvecs: AtomicU64,
    cost: AtomicU64,
}

impl Clone for SparseOperator {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.clone(),
            symmetry: self.symmetry,
            matvecs: AtomicU64::new(self.matvecs()),
            cost: AtomicU64::new(self.cost()),
        }
    }
}

impl PartialEq for SparseOperator {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx && self.values == other.values
    }
}

impl SparseOperator {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and zeros dropped.
    ///
    /// A `Symmetric` hint is verified and downgraded to `General` if the entries disagree.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)], hint: Symmetry) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite entry at ({i}, {j})")));
            }
            sorted.push((i, j, v));
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut k = 0;
        while k < sorted.len() {
            let (i, j, mut v) = sorted[k];
            k += 1;
            while k < sorted.len() && sorted[k].0 == i && sorted[k].1 == j {
                v += sorted[k].2;
                k += 1;
            }
            if v != 0.0 {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut op = Self {
            n,
            row_ptr,
            col_idx,
            values,
            symmetry: Symmetry::General,
            matvecs: AtomicU64::new(0),
            cost: AtomicU64::new(0),
        };
        if hint == Symmetry::Symmetric && op.is_exactly_symmetric() {
            op.symmetry = Symmetry::Symmetric;
        }
        Ok(op)
    }

    /// Stores the nonzero entries of a dense square matrix.
    pub fn from_dense(a: &DMatrix<f64>, hint: Symmetry) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!("operator must be square, got {:?}", a.shape())));
        }
        let n = a.nrows();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(n, &t, hint)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(row, col, value)` over stored entries in row order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k])))
    }

    fn is_exactly_symmetric(&self) -> bool {
        self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            a[(i, j)] = v;
        }
        a
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sparse product `A X` for an `n x r` dense block.
    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!("operator of order {} applied to {} rows", self.n, x.nrows())));
        }
        let r = x.ncols();
        let mut out = DMatrix::zeros(self.n, r);
        for c in 0..r {
            let xc = x.column(c);
            let mut oc = out.column_mut(c);
            for i in 0..self.n {
                let mut acc = 0.0;
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.values[k] * xc[self.col_idx[k]];
                }
                oc[i] = acc;
            }
        }
        self.matvecs.fetch_add(r as u64, Ordering::Relaxed);
        self.cost.fetch_add((self.nnz() * r) as u64, Ordering::Relaxed);
        Ok(out)
    }

    pub fn apply(&self, b: &BlockVector) -> Result<BlockVector> {
        Ok(BlockVector(self.apply_matrix(b.as_matrix())?))
    }

    /// Single-vector products applied so far.
    pub fn matvecs(&self) -> u64 {
        self.matvecs.load(Ordering::Relaxed)
    }

    /// Accumulated `nnz * r` over all block products.
    pub fn cost(&self) -> u64 {
        self.cost.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.matvecs.store(0, Ordering::Relaxed);
        self.cost.store(0, Ordering::Relaxed);
    }
}

/// Dense `n x r` block with `r >= 1` and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector(DMatrix<f64>);

impl BlockVector {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::InvalidArgument("block vector needs at least one column".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite entry in block vector".into()));
        }
        Ok(Self(data))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn width(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identity_apply() {
        let i3 = SparseOperator::from_dense(&DMatrix::identity(3, 3), Symmetry::Symmetric).unwrap();
        let b = BlockVector::new(DMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64)).unwrap();
        assert_eq!(i3.apply(&b).unwrap(), b);
        assert_eq!(i3.matvecs(), 2);
        assert_eq!(i3.cost(), 6);
    }

    #[test]
    fn negative_diagonal_apply() {
        let a = SparseOperator::from_triplets(2, &[(0, 0, -1.0), (1, 1, -2.0)], Symmetry::General).unwrap();
        let y = a.apply_matrix(&DMatrix::from_element(2, 1, 1.0)).unwrap();
        assert_eq!(y.as_slice(), &[-1.0, -2.0]);
    }

    #[test]
    fn duplicates_summed_zeros_dropped() {
        let a = SparseOperator::from_triplets(
            2,
            &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 0.0), (1, 1, 1.0), (1, 1, -1.0)],
            Symmetry::General,
        )
        .unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.row_ptr(), &[0, 1, 1]);
    }

    #[test]
    fn symmetry_hint_is_checked() {
        let a = SparseOperator::from_triplets(2, &[(0, 1, 1.0)], Symmetry::Symmetric).unwrap();
        assert_eq!(a.symmetry(), Symmetry::General);
        let b = SparseOperator::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)], Symmetry::Symmetric).unwrap();
        assert_eq!(b.symmetry(), Symmetry::Symmetric);
    }

    #[test]
    fn dimension_errors() {
        let a = SparseOperator::from_dense(&DMatrix::identity(3, 3), Symmetry::General).unwrap();
        assert!(matches!(a.apply_matrix(&DMatrix::zeros(2, 1)), Err(Error::DimensionMismatch(_))));
        assert!(SparseOperator::from_triplets(2, &[(2, 0, 1.0)], Symmetry::General).is_err());
        assert!(BlockVector::new(DMatrix::zeros(3, 0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn apply_matches_dense_product(n in 1usize..200, r in 1usize..4, density in 0.01f64..0.3, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dense = DMatrix::from_fn(n, n, |_, _| if rng.random::<f64>() < density { rng.random_range(-1.0..1.0) } else { 0.0 });
            let x = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
            let a = SparseOperator::from_dense(&dense, Symmetry::General).unwrap();
            let diff = (a.apply_matrix(&x).unwrap() - &dense * &x).amax();
            prop_assert!(diff <= 1e-13 * (1.0 + n as f64).sqrt());
        }
    }
}
