use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::schur::real_schur;
use crate::error::Result;

/// Eigenvector condition above which a decomposition is flagged defective.
pub const DEFECTIVE_CONDITION: f64 = 1e12;

/// Eigenvalues with unit-norm right eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<Complex64>,
    /// Column `i` is the eigenvector of `values[i]`.
    pub vectors: DMatrix<Complex64>,
    /// 2-norm condition number of `vectors`.
    pub condition: f64,
    /// `condition > 1e12`: consumers of the inverse eigenvector matrix must not trust it.
    pub defective: bool,
}

/// Eigendecomposition of a general real matrix.
pub fn eig_general(f: &DMatrix<f64>) -> Result<EigenPairs> {
    let n = f.nrows();
    let schur = real_schur(f)?;
    let values = schur.eigenvalues();
    let t = schur.t.map(|v| Complex64::new(v, 0.0));
    let q = schur.q.map(|v| Complex64::new(v, 0.0));
    let tiny = f64::EPSILON * schur.t.norm().max(f64::MIN_POSITIVE);

    let mut block_of = vec![0usize; n];
    for (b, &(s, size)) in schur.blocks.iter().enumerate() {
        for i in s..s + size {
            block_of[i] = b;
        }
    }

    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        let (bs, bsize) = schur.blocks[block_of[k]];
        let mut x = DVector::<Complex64>::zeros(n);
        if bsize == 1 {
            x[bs] = Complex64::new(1.0, 0.0);
        } else {
            // Null vector of the 2x2 block shifted by lambda.
            let b01 = t[(bs, bs + 1)];
            let a00 = t[(bs, bs)] - lambda;
            if b01.norm() >= a00.norm() {
                x[bs] = b01;
                x[bs + 1] = -a00;
            } else {
                let a11 = t[(bs + 1, bs + 1)] - lambda;
                x[bs] = -a11;
                x[bs + 1] = t[(bs + 1, bs)];
            }
        }
        let end = bs + bsize;
        let mut bi = block_of[k];
        while bi > 0 {
            bi -= 1;
            let (s, size) = schur.blocks[bi];
            let mut rhs = [Complex64::new(0.0, 0.0); 2];
            for (o, slot) in rhs.iter_mut().enumerate().take(size) {
                let row = s + o;
                let mut acc = Complex64::new(0.0, 0.0);
                for l in s + size..end {
                    acc += t[(row, l)] * x[l];
                }
                *slot = -acc;
            }
            if size == 1 {
                let mut d = t[(s, s)] - lambda;
                if d.norm() < tiny {
                    d = Complex64::new(tiny, 0.0);
                }
                x[s] = rhs[0] / d;
            } else {
                let a = t[(s, s)] - lambda;
                let b = t[(s, s + 1)];
                let c = t[(s + 1, s)];
                let d = t[(s + 1, s + 1)] - lambda;
                let mut det = a * d - b * c;
                if det.norm() < tiny * tiny.max(1e-300) {
                    det = Complex64::new(tiny, 0.0);
                }
                x[s] = (d * rhs[0] - b * rhs[1]) / det;
                x[s + 1] = (a * rhs[1] - c * rhs[0]) / det;
            }
            // Rescale to keep growth in check.
            let big = x.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
            if big > 1e100 {
                x /= Complex64::new(big, 0.0);
            }
        }
        let mut vcol = &q * x;
        let nrm = vcol.norm();
        if nrm > 0.0 {
            vcol /= Complex64::new(nrm, 0.0);
        }
        vectors.set_column(k, &vcol);
    }

    let condition = if n == 0 {
        1.0
    } else {
        let sv = vectors.clone().singular_values();
        let min = sv.min();
        if min > 0.0 {
            sv.max() / min
        } else {
            f64::INFINITY
        }
    };
    Ok(EigenPairs { values, vectors, condition, defective: !(condition <= DEFECTIVE_CONDITION) })
}

/// Ascending eigenvalues and orthonormal eigenvectors of a symmetric matrix.
pub fn eig_symmetric(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = nalgebra::SymmetricEigen::new(super::symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual_ok(f: &DMatrix<f64>, e: &EigenPairs) {
        let fc = f.map(|v| Complex64::new(v, 0.0));
        let scale = f.norm();
        for (i, &l) in e.values.iter().enumerate() {
            let q = e.vectors.column(i).into_owned();
            let r = &fc * &q - &q * l;
            assert!(r.norm() <= 1e-10 * scale.max(1e-300), "pair {i}: {}", r.norm());
        }
    }

    #[test]
    fn diagonal_input() {
        let f = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let e = eig_general(&f).unwrap();
        let mut re: Vec<f64> = e.values.iter().map(|v| v.re).collect();
        re.sort_by(f64::total_cmp);
        assert_eq!(re, vec![-2.0, -1.0]);
        for i in 0..2 {
            let col = e.vectors.column(i);
            assert!((col.iter().map(|v| v.norm()).fold(0.0, f64::max) - 1.0).abs() < 1e-15);
        }
        assert!(!e.defective);
        residual_ok(&f, &e);
    }

    #[test]
    fn symmetric_two_by_two() {
        let f = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        let e = eig_general(&f).unwrap();
        let mut re: Vec<f64> = e.values.iter().map(|v| v.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 3.0).abs() < 1e-14 && (re[1] + 1.0).abs() < 1e-14);
        residual_ok(&f, &e);
        assert!((e.condition - 1.0).abs() < 1e-10);
    }

    #[test]
    fn jordan_block_is_defective() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = eig_general(&f).unwrap();
        assert!(e.defective);
    }

    #[test]
    fn complex_pair_vectors() {
        let f = DMatrix::from_row_slice(3, 3, &[0.0, -2.0, 1.0, 2.0, 0.0, 0.5, 0.0, 0.0, -1.0]);
        let e = eig_general(&f).unwrap();
        assert!(e.values.iter().any(|v| (v.im - 2.0).abs() < 1e-12));
        residual_ok(&f, &e);
    }

    #[test]
    fn symmetric_helper_sorts_ascending() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 5.0]);
        let (vals, vecs) = eig_symmetric(&a);
        assert_eq!(vals.as_slice(), &[-1.0, 2.0, 5.0]);
        assert!((&vecs * DMatrix::from_diagonal(&vals) * vecs.transpose() - a).amax() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn random_pairs_satisfy_residual_bound(n in 1usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let e = eig_general(&f).unwrap();
            residual_ok(&f, &e);
        }
    }
}
