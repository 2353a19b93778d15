//! Compress-and-restart: each cycle solves `A Z + Z A^T + C L C^T = 0` on a short Krylov space,
//! and the factored residual of the cycle becomes the next right-hand side.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::arnoldi::BlockArnoldi;
use crate::densela::{economic_qr, eig_symmetric, symmetrize};
use crate::error::{Error, Result};
use crate::operators::{BlockVector, SparseOperator};
use crate::solvers::{solve_projected_with_core, IterationRecord, Method, ProjectedSolution, SolveReport, StopReason};

/// Factor with a `±1` diagonal core.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedFactor {
    /// `n x p`.
    pub factor: DMatrix<f64>,
    /// Diagonal of the core, entries `±1`.
    pub signs: Vec<f64>,
}

impl SignedFactor {
    pub fn rank(&self) -> usize {
        self.signs.len()
    }

    pub fn core(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.signs.clone()))
    }

    /// `C L C^T`.
    pub fn product(&self) -> DMatrix<f64> {
        let mut scaled = self.factor.clone();
        for (j, s) in self.signs.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.factor.transpose()
    }
}

/// Orthonormal `P` and the kept eigenvalues `s` with `P diag(s) P^T ≈ C L C^T`, largest
/// magnitude first, at most `max_rank` of them.
fn symmetric_eig_truncate(c: &DMatrix<f64>, l: &DMatrix<f64>, tol: f64, max_rank: usize) -> (DMatrix<f64>, Vec<f64>) {
    let (n, p) = c.shape();
    if p == 0 || n == 0 {
        return (DMatrix::zeros(n, 0), Vec::new());
    }
    let qr = economic_qr(c);
    let core = symmetrize(&(&qr.r * l * qr.r.transpose()));
    let (vals, vecs) = eig_symmetric(&core);
    let smax = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if smax == 0.0 {
        return (DMatrix::zeros(n, 0), Vec::new());
    }
    let mut order: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() > tol * smax).collect();
    order.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()));
    order.truncate(max_rank);
    let mut u = DMatrix::zeros(vecs.nrows(), order.len());
    for (k, &i) in order.iter().enumerate() {
        u.set_column(k, &vecs.column(i));
    }
    (&qr.q * u, order.iter().map(|&i| vals[i]).collect())
}

/// Symmetric compression of `C L C^T`: QR of `C`, eigendecomposition `R L R^T = U S U^T`,
/// truncation of `|s_i| <= tol max|s|`, then `C' = Q U_t |S_t|^{1/2}`, `L' = sign(S_t)`.
pub fn compress_symmetric(c: &DMatrix<f64>, l: &DMatrix<f64>, tol: f64) -> Result<SignedFactor> {
    compress_symmetric_capped(c, l, tol, usize::MAX)
}

/// As [`compress_symmetric`], keeping at most `max_rank` columns.
pub fn compress_symmetric_capped(c: &DMatrix<f64>, l: &DMatrix<f64>, tol: f64, max_rank: usize) -> Result<SignedFactor> {
    let p = c.ncols();
    if l.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!("C {:?} with core {:?}", c.shape(), l.shape())));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("compression tolerance must be nonnegative, got {tol}")));
    }
    let (mut factor, s) = symmetric_eig_truncate(c, l, tol, max_rank);
    let mut signs = Vec::with_capacity(s.len());
    for (j, v) in s.iter().enumerate() {
        factor.column_mut(j).scale_mut(v.abs().sqrt());
        signs.push(v.signum());
    }
    Ok(SignedFactor { factor, signs })
}

/// `X = sum P_i D_i P_i^T` with orthonormal `P_i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactoredSolution {
    pub factors: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl FactoredSolution {
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(n, n);
        for (p, d) in &self.factors {
            x += p * d * p.transpose();
        }
        x
    }

    pub fn total_columns(&self) -> usize {
        self.factors.iter().map(|(p, _)| p.ncols()).sum()
    }

    /// Merges all terms into one orthonormal factor, dropping eigenvalues below `tol` relative.
    pub fn merged(&self, tol: f64) -> Result<FactoredSolution> {
        if self.factors.is_empty() {
            return Ok(self.clone());
        }
        let n = self.factors[0].0.nrows();
        let total = self.total_columns();
        let mut c = DMatrix::zeros(n, total);
        let mut core = DMatrix::zeros(total, total);
        let mut off = 0;
        for (p, d) in &self.factors {
            let k = p.ncols();
            c.view_mut((0, off), (n, k)).copy_from(p);
            core.view_mut((off, off), (k, k)).copy_from(d);
            off += k;
        }
        let (p, s) = symmetric_eig_truncate(&c, &core, tol, usize::MAX);
        Ok(FactoredSolution { factors: vec![(p, DMatrix::from_diagonal(&DVector::from_vec(s)))] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartOptions {
    pub method: Method,
    /// Basis columns stored per cycle, `(m_k + 1) p_k <= mem_max`.
    pub mem_max: usize,
    pub tol: f64,
    pub k_max: usize,
    /// Relative truncation threshold; `None` keeps every nonzero direction.
    pub compress_tol: Option<f64>,
}

/// One row of the per-cycle log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Block width `p_k` of the cycle's right-hand side.
    pub block_size: usize,
    /// Arnoldi steps taken.
    pub steps: usize,
    /// `||G L G^T||_F / ||C^T C||_F` at the end of the cycle.
    pub rel_res: f64,
    /// Rank of the next right-hand side after compression.
    pub next_rank: usize,
    /// `||C L C^T - C' L' C'^T||_F` dropped by compression.
    pub compression_error: f64,
}

#[derive(Debug, Clone)]
pub struct RestartState {
    pub cycle: usize,
    pub rhs: SignedFactor,
    pub accumulated: FactoredSolution,
    pub initial_norm: f64,
    pub last_rel_res: f64,
}

impl RestartState {
    pub fn new(c: &BlockVector) -> Result<Self> {
        let cm = c.as_matrix();
        let initial_norm = (cm.transpose() * cm).norm();
        if initial_norm == 0.0 {
            return Err(Error::ZeroRightHandSide);
        }
        Ok(Self {
            cycle: 0,
            rhs: SignedFactor { factor: cm.clone(), signs: vec![1.0; cm.ncols()] },
            accumulated: FactoredSolution::default(),
            initial_norm,
            last_rel_res: 1.0,
        })
    }
}

/// Cycle length for a right-hand side of width `p`.
pub fn cycle_length(mem_max: usize, p: usize) -> Result<usize> {
    if p == 0 || mem_max / p < 2 {
        return Err(Error::MemoryBudgetTooSmall { mem_max, block_size: p });
    }
    Ok((mem_max / p - 1).max(1))
}

/// Runs one cycle and advances `state`; returns the cycle log, the last Arnoldi state and the
/// cycle's projected solution.
pub fn restart_cycle(
    state: &mut RestartState,
    a: &SparseOperator,
    opts: &RestartOptions,
) -> Result<(CycleRecord, BlockArnoldi, ProjectedSolution)> {
    if !matches!(opts.method, Method::Galerkin | Method::Pmr) {
        return Err(Error::UnsupportedMethod(format!("{} cannot be restarted; use galerkin or pmr", opts.method)));
    }
    let p = state.rhs.rank();
    if p == 0 {
        return Err(Error::InvalidArgument("empty right-hand side factor".into()));
    }
    let m_k = cycle_length(opts.mem_max, p)?;
    let core = state.rhs.core();
    let mut arn = BlockArnoldi::from_matrix(a, &state.rhs.factor)?;
    let threshold = opts.tol * state.initial_norm;
    let mut sol = None;
    for _ in 0..m_k {
        match arn.extend(a) {
            Ok(()) => {}
            Err(Error::AlreadyExhausted(_)) => break,
            Err(e) => return Err(e),
        }
        let s = solve_projected_with_core(&arn, opts.method, None, Some(&core))?;
        let done = s.res_norm <= threshold || arn.is_exhausted() || arn.is_breakdown();
        sol = Some(s);
        if done {
            break;
        }
    }
    let sol = sol.ok_or_else(|| Error::InvalidArgument("cycle took no Arnoldi step".into()))?;
    let steps = arn.steps();
    let r = p;
    let q = steps * r;
    state.accumulated.factors.push((arn.basis(steps), sol.y.clone()));

    // V_{m+1} G L3 G^T V_{m+1}^T = W K W^T with W = V_{m+1} [g1 - g3, g2], K = [[0, I], [I, 0]]
    let g = &sol.res_factor.g;
    let mut small = DMatrix::zeros(q + r, 2 * r);
    small.columns_mut(0, r).copy_from(&(g.columns(0, r) - g.columns(2 * r, r)));
    small.columns_mut(r, r).copy_from(&g.columns(r, r));
    let mut v_ext = DMatrix::zeros(a.dim(), q + r);
    for (i, b) in arn.blocks().iter().enumerate().take(steps + 1) {
        v_ext.columns_mut(i * r, r).copy_from(b);
    }
    let w = v_ext * small;
    let mut k = DMatrix::zeros(2 * r, 2 * r);
    for i in 0..r {
        k[(i, r + i)] = 1.0;
        k[(r + i, i)] = 1.0;
    }
    let cap = (opts.mem_max / 2).max(1);
    let next = compress_symmetric_capped(&w, &k, opts.compress_tol.unwrap_or(0.0), cap)?;
    let exact = &w * &k * w.transpose();
    let compression_error = (exact - next.product()).norm();

    state.cycle += 1;
    state.rhs = next;
    state.last_rel_res = sol.res_norm / state.initial_norm;
    let rec = CycleRecord {
        cycle: state.cycle,
        block_size: p,
        steps,
        rel_res: state.last_rel_res,
        next_rank: state.rhs.rank(),
        compression_error,
    };
    Ok((rec, arn, sol))
}

/// Result of a restarted run.
#[derive(Debug, Clone)]
pub struct RestartOutcome {
    /// History entries are per cycle (`m` is the cycle index).
    pub report: SolveReport,
    pub solution: FactoredSolution,
    pub cycles: Vec<CycleRecord>,
}

/// Restarted Galerkin or PMR until `||R||_F <= tol ||C^T C||_F` or `k_max` cycles.
pub fn run_restarted(a: &SparseOperator, c: &BlockVector, opts: &RestartOptions) -> Result<RestartOutcome> {
    if !matches!(opts.method, Method::Galerkin | Method::Pmr) {
        return Err(Error::UnsupportedMethod(format!("{} cannot be restarted; use galerkin or pmr", opts.method)));
    }
    let r = c.width();
    if opts.mem_max < 2 * r + 2 {
        return Err(Error::MemoryBudgetTooSmall { mem_max: opts.mem_max, block_size: r });
    }
    if !(opts.tol > 0.0) || opts.k_max == 0 {
        return Err(Error::InvalidArgument("restart needs tol > 0 and k_max >= 1".into()));
    }
    let start = Instant::now();
    let mv0 = a.matvecs();
    let mut state = RestartState::new(c)?;
    let mut history = Vec::new();
    let mut cycles = Vec::new();
    let mut last = None;
    let mut stop = StopReason::MaxIterations;
    let mut converged = false;
    for _ in 0..opts.k_max {
        let (rec, arn, sol) = match restart_cycle(&mut state, a, opts) {
            Ok(v) => v,
            Err(e) if history.is_empty() => return Err(e),
            Err(e) => {
                stop = StopReason::Failed(e.to_string());
                break;
            }
        };
        history.push(IterationRecord {
            m: rec.cycle,
            rel_res: rec.rel_res,
            matvecs: a.matvecs() - mv0,
            elapsed: start.elapsed().as_secs_f64(),
        });
        cycles.push(rec);
        last = Some((arn, sol));
        if rec.rel_res <= opts.tol {
            converged = true;
            stop = StopReason::Converged;
            break;
        }
        if state.rhs.rank() == 0 {
            // residual compressed away entirely
            converged = true;
            stop = StopReason::Converged;
            break;
        }
    }
    let (arnoldi, solution) = last.expect("at least one cycle ran");
    let report = SolveReport {
        method: opts.method,
        history,
        converged,
        stop,
        rhs_norm: state.initial_norm,
        arnoldi,
        solution: Some(solution),
        diagnostics: BTreeMap::new(),
    };
    Ok(RestartOutcome { report, solution: state.accumulated, cycles })
}
