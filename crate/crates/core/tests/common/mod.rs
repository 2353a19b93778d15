#![allow(dead_code)]

use lyakrylov::arnoldi::BlockArnoldi;
use lyakrylov::operators::{BlockVector, SparseOperator, Symmetry};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense `A = K - (B B^T / n + shift I)` with skew `K`: symmetric part negative definite.
pub fn dissipative(n: usize, skew: f64, shift: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&g - g.transpose()) * (0.5 * skew) - (&b * b.transpose()) / n as f64 - DMatrix::identity(n, n) * shift
}

pub fn operator(d: &DMatrix<f64>) -> SparseOperator {
    SparseOperator::from_dense(d, Symmetry::General).unwrap()
}

pub fn block(n: usize, r: usize, rng: &mut ChaCha8Rng) -> BlockVector {
    BlockVector::new(DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0))).unwrap()
}

pub fn arnoldi(a: &SparseOperator, c: &BlockVector, m: usize) -> BlockArnoldi {
    let mut arn = BlockArnoldi::init(a, c).unwrap();
    for _ in 0..m {
        arn.extend(a).unwrap();
    }
    arn
}

/// The 2x2 fixture `A = [[-2, 1], [1, -2]]`, `c = e_1`, after one step.
pub fn s1() -> (SparseOperator, DMatrix<f64>, BlockArnoldi) {
    let a = SparseOperator::from_dense(&DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]), Symmetry::Symmetric).unwrap();
    let c = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
    let mut arn = BlockArnoldi::from_matrix(&a, &c).unwrap();
    arn.extend(&a).unwrap();
    (a, c, arn)
}

pub fn rel_close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs())
}
