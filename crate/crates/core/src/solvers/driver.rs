use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::arnoldi::BlockArnoldi;
use crate::densela::DenseConfig;
use crate::error::{Error, Result};
use crate::operators::{BlockVector, SparseOperator};

use super::{solve_mr, solve_nks, solve_projected_with_core, Method, NksOptions, ProjectedSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub method: Method,
    pub m_max: usize,
    pub tol: f64,
    pub dense: DenseConfig,
    pub nks: NksOptions,
    /// Keep iterating past convergence until exhaustion or `m_max`.
    pub run_to_max: bool,
}

impl SolverOptions {
    pub fn new(method: Method, m_max: usize, tol: f64) -> Self {
        Self { method, m_max, tol, dense: DenseConfig::from_env(), nks: NksOptions::default(), run_to_max: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub m: usize,
    /// `||R_m||_F / ||C^T C||_F`.
    pub rel_res: f64,
    /// Single-vector products with `A` since the run started.
    pub matvecs: u64,
    /// Wall-clock seconds since the run started.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Exhausted,
    Breakdown,
    MaxIterations,
    /// A projected solve failed; the message is the error text.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: Method,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub stop: StopReason,
    /// `||C^T C||_F`.
    pub rhs_norm: f64,
    pub arnoldi: BlockArnoldi,
    /// Solution at the last recorded step.
    pub solution: Option<ProjectedSolution>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl SolveReport {
    /// First step whose relative residual is at most `tol`.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.history.iter().find(|h| h.rel_res <= tol).map(|h| h.m)
    }

    pub fn final_rel_res(&self) -> Option<f64> {
        self.history.last().map(|h| h.rel_res)
    }

    /// Dense `V_m Y V_m^T`; intended for small `n`.
    pub fn dense_solution(&self) -> Option<DMatrix<f64>> {
        let sol = self.solution.as_ref()?;
        let q = sol.y.nrows();
        let v = self.arnoldi.basis(q / self.arnoldi.block_size());
        Some(&v * &sol.y * v.transpose())
    }
}

/// One projected solve on the current basis.
pub fn solve_step(arn: &BlockArnoldi, opts: &SolverOptions, warm: Option<&DMatrix<f64>>) -> Result<ProjectedSolution> {
    match opts.method {
        Method::Galerkin | Method::Pmr => solve_projected_with_core(arn, opts.method, None, None),
        Method::Mr => solve_mr(arn, &opts.dense, warm),
        Method::Nks => solve_nks(arn, None, &opts.nks),
    }
}

/// Block Krylov iteration with the residual test `||R_m||_F <= tol ||C^T C||_F`.
pub fn run_solver(a: &SparseOperator, c: &BlockVector, method: Method, m_max: usize, tol: f64) -> Result<SolveReport> {
    run_solver_observed(a, c, &SolverOptions::new(method, m_max, tol), |_, _, _| {})
}

/// As [`run_solver`], calling `observe` after every step.
pub fn run_solver_observed<F>(a: &SparseOperator, c: &BlockVector, opts: &SolverOptions, mut observe: F) -> Result<SolveReport>
where
    F: FnMut(&BlockArnoldi, &ProjectedSolution, &IterationRecord),
{
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {}", opts.tol)));
    }
    if opts.m_max == 0 {
        return Err(Error::InvalidArgument("m_max must be at least 1".into()));
    }
    let start = Instant::now();
    let mv0 = a.matvecs();
    let mut arn = BlockArnoldi::init(a, c)?;
    let gamma = arn.gamma();
    let rhs_norm = (gamma * gamma.transpose()).norm();

    let mut history = Vec::new();
    let mut solution: Option<ProjectedSolution> = None;
    let mut stop = StopReason::MaxIterations;
    let mut converged = false;
    for _ in 0..opts.m_max {
        match arn.extend(a) {
            Ok(()) => {}
            Err(Error::AlreadyExhausted(_)) => {
                stop = StopReason::Exhausted;
                break;
            }
            Err(e) => return Err(e),
        }
        let warm = solution.as_ref().map(|s| &s.y);
        let sol = match solve_step(&arn, opts, warm) {
            Ok(s) => s,
            Err(e) => {
                stop = StopReason::Failed(e.to_string());
                break;
            }
        };
        let rec = IterationRecord {
            m: arn.steps(),
            rel_res: sol.res_norm / rhs_norm,
            matvecs: a.matvecs() - mv0,
            elapsed: start.elapsed().as_secs_f64(),
        };
        observe(&arn, &sol, &rec);
        history.push(rec);
        solution = Some(sol);
        if rec.rel_res <= opts.tol {
            converged = true;
            if !opts.run_to_max {
                stop = StopReason::Converged;
                break;
            }
        }
        if arn.is_exhausted() {
            stop = StopReason::Exhausted;
            break;
        }
        if arn.is_breakdown() {
            stop = StopReason::Breakdown;
            break;
        }
    }
    if converged && stop == StopReason::MaxIterations {
        stop = StopReason::Converged;
    }
    Ok(SolveReport {
        method: opts.method,
        history,
        converged,
        stop,
        rhs_norm,
        arnoldi: arn,
        solution,
        diagnostics: BTreeMap::new(),
    })
}
