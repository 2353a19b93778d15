//! Nonlinear Krylov subspace method: the modification `M` minimizing the residual of the
//! modified Galerkin solution.

use nalgebra::{DMatrix, DVector};

use crate::arnoldi::BlockArnoldi;
use crate::densela::{symmetrize, LyapunovSolver};
use crate::error::{Error, Result};

use super::{
    modified_matrix, pmr_modification, projected_rhs, residual_norm, solve_projected_with_core, Method, ProjectedSolution,
};

/// Objective value assigned where the modified matrix has a singular Lyapunov operator.
const SINGULAR_PENALTY: f64 = 1e6;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Step doublings tried after an immediately accepted step.
const MAX_EXPANSIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NksGradient {
    /// Exact gradient through one transposed Lyapunov solve.
    Adjoint,
    /// Forward differences with the given step.
    ForwardDifference(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NksOptions {
    pub gradient: NksGradient,
    /// Iteration cap; `None` means `200 (mr)^2`.
    pub max_iterations: Option<usize>,
    /// Stop once the gradient's max entry drops below this.
    pub grad_tol: f64,
}

impl Default for NksOptions {
    fn default() -> Self {
        Self { gradient: NksGradient::Adjoint, max_iterations: None, grad_tol: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NksInfo {
    pub iterations: usize,
    pub evaluations: usize,
    /// Starting point chosen: PMR or zero (Galerkin).
    pub started_from: Method,
    /// The iteration cap was hit or the line search failed before the gradient test passed.
    pub stalled: bool,
    pub gradient_norm: f64,
}

struct Objective {
    h: DMatrix<f64>,
    h_last: DMatrix<f64>,
    s: DMatrix<f64>,
    scale: f64,
    q: usize,
    r: usize,
    evaluations: usize,
}

impl Objective {
    fn solve_y(&self, m: &DMatrix<f64>) -> Result<(DMatrix<f64>, LyapunovSolver)> {
        let f = modified_matrix(&self.h, m);
        let solver = LyapunovSolver::new(&f)?;
        let y = solver.solve(&self.s)?;
        Ok((y, solver))
    }

    /// Squared residual relative to `||S||_F^2`; the penalty on a singular operator.
    fn value(&mut self, m: &DMatrix<f64>) -> Result<f64> {
        self.evaluations += 1;
        match self.solve_y(m) {
            Ok((y, _)) => {
                let res = residual_norm(&y, m, &self.h_last)?;
                Ok(res * res / self.scale)
            }
            Err(Error::SingularOperator { .. }) => Ok(SINGULAR_PENALTY),
            Err(e) => Err(e),
        }
    }

    fn adjoint_gradient(&mut self, m: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        self.evaluations += 1;
        let (y, solver) = match self.solve_y(m) {
            Ok(v) => v,
            Err(Error::SingularOperator { .. }) => return Ok((SINGULAR_PENALTY, DMatrix::zeros(self.q, self.r))),
            Err(e) => return Err(e),
        };
        let (q, r) = (self.q, self.r);
        let res = residual_norm(&y, m, &self.h_last)?;
        let p = y.columns(q - r, r).into_owned();
        let n = p.transpose() * m;
        let hth = self.h_last.transpose() * &self.h_last;
        let dp = (&p * &hth + &p * (m.transpose() * m) + m * &n) * 4.0;
        let mut gy = DMatrix::zeros(q, q);
        gy.columns_mut(q - r, r).copy_from(&dp);
        let gy = symmetrize(&gy);
        let lambda = solver.solve_transposed(&(-gy))?;
        let grad = (m * (p.transpose() * &p) + &p * n.transpose()) * 4.0 - (lambda * &p) * 2.0;
        Ok((res * res / self.scale, grad / self.scale))
    }

    fn fd_gradient(&mut self, m: &DMatrix<f64>, step: f64) -> Result<(f64, DMatrix<f64>)> {
        let f0 = self.value(m)?;
        let mut grad = DMatrix::zeros(self.q, self.r);
        let mut probe = m.clone();
        for k in 0..m.len() {
            let h = step * m[k].abs().max(1.0);
            probe[k] = m[k] + h;
            grad[k] = (self.value(&probe)? - f0) / h;
            probe[k] = m[k];
        }
        Ok((f0, grad))
    }

    fn gradient(&mut self, m: &DMatrix<f64>, kind: NksGradient) -> Result<(f64, DMatrix<f64>)> {
        match kind {
            NksGradient::Adjoint => self.adjoint_gradient(m),
            NksGradient::ForwardDifference(h) => self.fd_gradient(m, h),
        }
    }
}

/// Minimizes the residual over `M` by BFGS with Armijo backtracking.
///
/// Without `m0` it starts from whichever of the PMR modification and zero gives the smaller
/// residual, so the result never does worse than Galerkin or PMR.
pub fn solve_nks(arn: &BlockArnoldi, m0: Option<&DMatrix<f64>>, opts: &NksOptions) -> Result<ProjectedSolution> {
    let steps = arn.steps();
    if steps == 0 {
        return Err(Error::InvalidArgument("NKS needs at least one Arnoldi step".into()));
    }
    let r = arn.block_size();
    let q = steps * r;
    let s = projected_rhs(arn.gamma(), None, q);
    let scale = s.norm_squared();
    if scale == 0.0 {
        return Err(Error::ZeroRightHandSide);
    }
    let mut obj = Objective { h: arn.h_square(), h_last: arn.h_last(), s, scale, q, r, evaluations: 0 };

    let (mut m, started_from) = match m0 {
        Some(m0) => {
            if m0.shape() != (q, r) {
                return Err(Error::DimensionMismatch(format!("M0 {:?}, expected {:?}", m0.shape(), (q, r))));
            }
            (m0.clone(), Method::Nks)
        }
        None => {
            let zero = DMatrix::zeros(q, r);
            let f_zero = obj.value(&zero)?;
            match pmr_modification(&obj.h, &obj.h_last) {
                Ok(pmr) if obj.value(&pmr)? <= f_zero => (pmr, Method::Pmr),
                _ => (zero, Method::Galerkin),
            }
        }
    };

    let dim = q * r;
    let cap = opts.max_iterations.unwrap_or(200 * q * q);
    let (mut f, mut g) = obj.gradient(&m, opts.gradient)?;
    let mut inv_h = DMatrix::<f64>::identity(dim, dim);
    let mut iterations = 0;
    let mut stalled = false;
    let mut first = true;
    let mut curvature_seen = false;
    while g.amax() > opts.grad_tol && f < SINGULAR_PENALTY {
        if iterations >= cap {
            stalled = true;
            break;
        }
        let gv = DVector::from_column_slice(g.as_slice());
        let mut dir = -(&inv_h * &gv);
        let mut slope = dir.dot(&gv);
        if !(slope < 0.0) {
            inv_h.fill_with_identity();
            dir = -gv.clone();
            slope = dir.dot(&gv);
        }
        if first {
            // scale the first step to a unit change in M
            let s0 = 1.0 / dir.amax().max(1.0);
            dir *= s0;
            slope *= s0;
            first = false;
        }
        let d = DMatrix::from_column_slice(q, r, dir.as_slice());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &m + &d * t;
            let ft = obj.value(&trial)?;
            if ft <= f + ARMIJO_C1 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((mut trial, mut ft)) = accepted else {
            stalled = true;
            break;
        };
        if t == 1.0 {
            // where the objective is locally concave BFGS cannot grow the step, so extrapolate
            for _ in 0..MAX_EXPANSIONS {
                t *= 2.0;
                let wider = &m + &d * t;
                let fw = obj.value(&wider)?;
                if !(fw < ft) {
                    break;
                }
                (trial, ft) = (wider, fw);
            }
        }
        let (f_new, g_new) = obj.gradient(&trial, opts.gradient)?;
        let sv = DVector::from_column_slice((&trial - &m).as_slice());
        let yv = DVector::from_column_slice((&g_new - &g).as_slice());
        let sy = sv.dot(&yv);
        if sy > 1e-300 {
            if !curvature_seen {
                inv_h *= sy / yv.norm_squared();
                curvature_seen = true;
            }
            let rho = 1.0 / sy;
            let hy = &inv_h * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (s (Hy)^T + (Hy) s^T) + (rho^2 y^T H y + rho) s s^T
            inv_h -= (&sv * hy.transpose() + &hy * sv.transpose()) * rho;
            inv_h += (&sv * sv.transpose()) * (rho * rho * yhy + rho);
        }
        let progress = (f - f_new).abs();
        m = trial;
        f = f_new;
        g = g_new;
        iterations += 1;
        if progress <= f64::EPSILON * f.abs() && sv.amax() <= f64::EPSILON * m.amax().max(1.0) {
            break;
        }
    }

    let evaluations = obj.evaluations;
    let mut sol = solve_projected_with_core(arn, Method::Nks, Some(&m), None)?;
    sol.nks = Some(NksInfo { iterations, evaluations, started_from, stalled, gradient_norm: g.norm() });
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{seeded_block, SparseOperator, Symmetry};
    use rand::{Rng, SeedableRng};

    fn s1() -> BlockArnoldi {
        let a = SparseOperator::from_dense(&DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]), Symmetry::Symmetric).unwrap();
        let mut arn = BlockArnoldi::from_matrix(&a, &DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        arn.extend(&a).unwrap();
        arn
    }

    fn random_problem(n: usize, r: usize, m: usize, seed: u64) -> BlockArnoldi {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let dense = g * 0.8 - DMatrix::identity(n, n) * (n as f64).sqrt();
        let a = SparseOperator::from_dense(&dense, Symmetry::General).unwrap();
        let mut arn = BlockArnoldi::init(&a, &seeded_block(n, r, seed).unwrap()).unwrap();
        for _ in 0..m {
            arn.extend(&a).unwrap();
        }
        arn
    }

    #[test]
    fn scalar_fixture() {
        let sol = solve_nks(&s1(), None, &NksOptions::default()).unwrap();
        assert!((sol.modification[(0, 0)] + 0.25).abs() < 1e-10, "{}", sol.modification[(0, 0)]);
        assert!((sol.y[(0, 0)] - 2.0 / 9.0).abs() < 1e-10);
        assert!((sol.res_norm - 1.0 / 3.0).abs() < 1e-10);
        let info = sol.nks.unwrap();
        assert!(!info.stalled);
        assert_eq!(info.started_from, Method::Pmr);
    }

    #[test]
    fn scalar_objective_shape() {
        // phi^2(M) = (1 + 2 M^2) / (2 (2 - M)^2) for the 2x2 fixture
        let arn = s1();
        let mut obj = Objective {
            h: arn.h_square(),
            h_last: arn.h_last(),
            s: projected_rhs(arn.gamma(), None, 1),
            scale: 1.0,
            q: 1,
            r: 1,
            evaluations: 0,
        };
        for mv in [-1.5, -0.25, 0.0, 0.7, 1.9] {
            let m = DMatrix::from_element(1, 1, mv);
            let expected = (1.0 + 2.0 * mv * mv) / (2.0 * (2.0 - mv) * (2.0 - mv));
            let (f, g) = obj.adjoint_gradient(&m).unwrap();
            assert!((f - expected).abs() < 1e-13 * expected.max(1.0));
            let d = (4.0 * mv * (2.0 - mv) + 2.0 * (1.0 + 2.0 * mv * mv)) / (2.0 * (2.0 - mv).powi(3));
            assert!((g[(0, 0)] - d).abs() < 1e-12 * d.abs().max(1.0), "{} vs {d}", g[(0, 0)]);
        }
        assert_eq!(obj.value(&DMatrix::from_element(1, 1, 2.0)).unwrap(), SINGULAR_PENALTY);
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        for seed in 0..5 {
            let arn = random_problem(16, 2, 3, seed);
            let (q, r) = (6, 2);
            let mut obj = Objective {
                h: arn.h_square(),
                h_last: arn.h_last(),
                s: projected_rhs(arn.gamma(), None, q),
                scale: 1.0,
                q,
                r,
                evaluations: 0,
            };
            let m = pmr_modification(&obj.h, &obj.h_last).unwrap() * 0.5;
            let (_, ga) = obj.adjoint_gradient(&m).unwrap();
            let mut gc = DMatrix::zeros(q, r);
            for k in 0..m.len() {
                let h = 1e-6 * m[k].abs().max(1.0);
                let mut p = m.clone();
                p[k] += h;
                let fp = obj.value(&p).unwrap();
                p[k] -= 2.0 * h;
                gc[k] = (fp - obj.value(&p).unwrap()) / (2.0 * h);
            }
            assert!((&ga - &gc).norm() <= 1e-6 * ga.norm().max(1e-8), "seed {seed}");
        }
    }

    #[test]
    fn never_worse_than_galerkin_or_pmr() {
        for seed in 0..4 {
            let arn = random_problem(20, 1 + (seed as usize % 2), 3, seed);
            let n = solve_nks(&arn, None, &NksOptions::default()).unwrap();
            let g = solve_projected_with_core(&arn, Method::Galerkin, None, None).unwrap();
            let p = solve_projected_with_core(&arn, Method::Pmr, None, None).unwrap();
            assert!(n.res_norm <= g.res_norm.min(p.res_norm) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn forward_difference_option_is_close() {
        let opts = NksOptions { gradient: NksGradient::ForwardDifference(1e-7), ..Default::default() };
        let fd = solve_nks(&s1(), None, &NksOptions { grad_tol: 1e-8, ..opts }).unwrap();
        assert!((fd.modification[(0, 0)] + 0.25).abs() < 1e-5);
    }
}
