//! Randomized invariants of the projected solvers, checked against independent dense oracles.

mod common;

use common::{arnoldi, block, dissipative, operator, rng};
use lyakrylov::densela::{eig_general, eig_symmetric};
use lyakrylov::diagnostics::dense_residual_oracle;
use lyakrylov::solvers::{
    compute_pmr_modification, modified_matrix, residual_norm, run_solver_observed, solve_nks, solve_projected, Method,
    NksOptions, SolverOptions,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn reported_residual_matches_dense(seed in any::<u64>(), n in 4usize..40, r in 1usize..=3, m in 1usize..=6) {
        let mut g = rng(seed);
        let a = operator(&dissipative(n, 2.0, 0.2, &mut g));
        let c = block(n, r, &mut g);
        let arn = arnoldi(&a, &c, m.min((n - 1) / r).max(1));
        let v = arn.basis(arn.steps());
        for method in Method::ALL {
            let sol = solve_projected(&arn, method, None).unwrap();
            let dense = dense_residual_oracle(&a, &[(v.clone(), sol.y.clone())], c.as_matrix()).unwrap();
            prop_assert!((sol.res_norm - dense).abs() <= 1e-9 * dense.max(1e-300), "{method}: {} vs {dense}", sol.res_norm);
        }
    }

    #[test]
    fn pmr_is_stable_with_semidefinite_solution(seed in any::<u64>(), n in 3usize..40, r in 1usize..=3, m in 1usize..=8) {
        let mut g = rng(seed);
        let a = operator(&dissipative(n, 3.0, 0.05, &mut g));
        let c = block(n, r, &mut g);
        let arn = arnoldi(&a, &c, m.min((n - 1) / r).max(1));
        let pm = compute_pmr_modification(&arn).unwrap();
        let f = modified_matrix(&arn.h_square(), &pm);
        let eig = eig_general(&f).unwrap();
        prop_assert!(eig.values.iter().all(|l| l.re < 0.0));
        let y = solve_projected(&arn, Method::Pmr, None).unwrap().y;
        let (ev, _) = eig_symmetric(&y);
        prop_assert!(ev.min() >= -1e-10 * ev.max().max(1.0));
    }

    #[test]
    fn mr_residual_never_increases(seed in any::<u64>(), n in 6usize..40, r in 1usize..=2) {
        let mut g = rng(seed);
        let a = operator(&dissipative(n, 3.0, 0.1, &mut g));
        let c = block(n, r, &mut g);
        let mut opts = SolverOptions::new(Method::Mr, (n / r).min(10), 1e-300);
        opts.run_to_max = true;
        let rep = run_solver_observed(&a, &c, &opts, |_, _, _| {}).unwrap();
        for w in rep.history.windows(2) {
            prop_assert!(w[1].rel_res <= w[0].rel_res + 1e-12);
        }
    }

    #[test]
    fn exhaustion_reproduces_the_exact_solution(seed in any::<u64>(), n in 2usize..24, r in 1usize..=3) {
        let mut g = rng(seed);
        let a = operator(&dissipative(n, 1.0, 0.3, &mut g));
        let c = block(n, r.min(n), &mut g);
        let mut arn = lyakrylov::arnoldi::BlockArnoldi::init(&a, &c).unwrap();
        while !arn.is_exhausted() && !arn.is_breakdown() {
            arn.extend(&a).unwrap();
        }
        prop_assert!(arn.steps() <= n.div_ceil(c.width()));
        if arn.is_exhausted() {
            let y = solve_projected(&arn, Method::Galerkin, None).unwrap().y;
            let cc = c.as_matrix() * c.as_matrix().transpose();
            let res = dense_residual_oracle(&a, &[(arn.basis(arn.steps()), y)], c.as_matrix()).unwrap();
            prop_assert!(res <= 1e-10 * cc.norm());
        }
    }

    #[test]
    fn operator_matches_dense_product(seed in any::<u64>(), n in 1usize..60, k in 1usize..4) {
        let mut g = rng(seed);
        let d = dissipative(n, 1.0, 0.0, &mut g);
        let x = block(n, k, &mut g);
        let got = operator(&d).apply_matrix(x.as_matrix()).unwrap();
        prop_assert!((got - &d * x.as_matrix()).amax() <= 1e-13 * d.amax() * n as f64);
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn nks_never_loses_to_galerkin_or_pmr(seed in any::<u64>(), n in 5usize..20, r in 1usize..=2, m in 1usize..=3) {
        let mut g = rng(seed);
        let a = operator(&dissipative(n, 4.0, 0.05, &mut g));
        let c = block(n, r, &mut g);
        let arn = arnoldi(&a, &c, m.min((n - 1) / r).max(1));
        let nks = solve_nks(&arn, None, &NksOptions::default()).unwrap();
        let h_last = arn.h_last();
        let q = arn.steps() * r;
        let zero = DMatrix::zeros(q, r);
        let f0 = residual_norm(&solve_projected(&arn, Method::Galerkin, None).unwrap().y, &zero, &h_last).unwrap();
        let pmr = solve_projected(&arn, Method::Pmr, None).unwrap();
        let best = f0.min(pmr.res_norm);
        prop_assert!(nks.res_norm <= best + 1e-12 * best.max(1.0));
    }
}

/// GMRES iterate for `A x = c` over the Krylov space, from an explicitly orthonormalized power basis.
fn gmres_oracle(a: &DMatrix<f64>, c: &DVector<f64>, m: usize) -> DVector<f64> {
    let n = c.len();
    let mut k = DMatrix::zeros(n, m);
    let mut v = c.clone();
    for j in 0..m {
        let nv = v.norm();
        k.set_column(j, &(&v / nv));
        v = a * k.column(j);
    }
    let q = k.qr().q();
    let aq = a * &q;
    let z = aq.svd(true, true).solve(c, 1e-14).unwrap();
    q * z
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn pmr_single_vector_matches_gmres(seed in any::<u64>(), n in 6usize..30, m in 1usize..=5) {
        let mut g = rng(seed);
        let d = dissipative(n, 2.0, 0.3, &mut g);
        let a = operator(&d);
        let c = block(n, 1, &mut g);
        let arn = arnoldi(&a, &c, m);
        prop_assume!(!arn.is_exhausted());
        let pm = compute_pmr_modification(&arn).unwrap();
        let f = modified_matrix(&arn.h_square(), &pm);
        let mut e1g = DVector::zeros(m);
        e1g[0] = arn.gamma()[(0, 0)];
        let y = f.lu().solve(&e1g).unwrap();
        let x = arn.basis(m) * y;
        let oracle = gmres_oracle(&d, &c.as_matrix().column(0).into_owned(), m);
        prop_assert!((&x - &oracle).norm() <= 1e-8 * oracle.norm(), "{} vs {}", x.norm(), oracle.norm());
    }
}
