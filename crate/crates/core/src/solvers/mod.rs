//! Projected solvers over a block Arnoldi basis.
//!
//! With `Hbar = [H; H_{m+1,m} E_m^T]` and `S = E_1 Gamma L Gamma^T E_1^T` the Galerkin family
//! solves `(H + M E_m^T) Y + Y (H + M E_m^T)^T + S = 0` for a modification block `M`
//! (zero for Galerkin). The residual of `X = V_m Y V_m^T` is `V_{m+1} G L3 G^T V_{m+1}^T`.

mod driver;
mod kron;
mod nks;

pub use driver::{run_solver, run_solver_observed, solve_step, IterationRecord, SolveReport, SolverOptions, StopReason};
pub use kron::{j_matrix, mr_modification_kron, pmr_minus_mr_kron, pmr_modification_kron};
pub use nks::{solve_nks, NksGradient, NksInfo, NksOptions};

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::arnoldi::BlockArnoldi;
use crate::densela::{rcond, solve_matrix_least_squares, solve_small_lyapunov, DenseConfig, LeastSquaresPath};
use crate::error::{Error, Result};

/// Reciprocal condition number below which `H` counts as singular.
pub const SINGULAR_RCOND: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Galerkin,
    Pmr,
    Mr,
    Nks,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Galerkin, Method::Pmr, Method::Mr, Method::Nks];

    pub fn name(self) -> &'static str {
        match self {
            Method::Galerkin => "galerkin",
            Method::Pmr => "pmr",
            Method::Mr => "mr",
            Method::Nks => "nks",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "galerkin" | "g" => Ok(Method::Galerkin),
            "pmr" => Ok(Method::Pmr),
            "mr" => Ok(Method::Mr),
            "nks" => Ok(Method::Nks),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// Factored residual `G L G^T`.
#[derive(Debug, Clone)]
pub struct ResidualFactor {
    /// `(m+1) r x 3 r`.
    pub g: DMatrix<f64>,
    /// `3 r x 3 r` signature core.
    pub core: DMatrix<f64>,
}

impl ResidualFactor {
    pub fn product(&self) -> DMatrix<f64> {
        &self.g * &self.core * self.g.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct ProjectedSolution {
    pub method: Method,
    /// `mr x mr` symmetric.
    pub y: DMatrix<f64>,
    /// `mr x r` modification block; zero for Galerkin and MR.
    pub modification: DMatrix<f64>,
    /// Frobenius norm of the residual of `X = V_m Y V_m^T`.
    pub res_norm: f64,
    /// For MR this is built with a zero modification and is only indicative.
    pub res_factor: ResidualFactor,
    pub mr_path: Option<LeastSquaresPath>,
    pub nks: Option<NksInfo>,
}

/// `J = E_m H_{m+1,m}^T H_{m+1,m} E_m^T` restricted to its last block, i.e. `E_m^T`-weighted.
fn last_block_gram(h_last: &DMatrix<f64>) -> DMatrix<f64> {
    h_last.transpose() * h_last
}

/// `M = H^{-T} E_m H_{m+1,m}^T H_{m+1,m}`.
pub fn compute_pmr_modification(arn: &BlockArnoldi) -> Result<DMatrix<f64>> {
    let m = arn.steps();
    if m == 0 {
        return Err(Error::InvalidArgument("PMR modification needs at least one Arnoldi step".into()));
    }
    pmr_modification(&arn.h_square(), &arn.h_last())
}

/// PMR modification from `H` (mr x mr) and `H_{m+1,m}` (r x r).
pub fn pmr_modification(h: &DMatrix<f64>, h_last: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (q, r) = (h.nrows(), h_last.nrows());
    let rc = rcond(h);
    if !(rc >= SINGULAR_RCOND) {
        return Err(Error::SingularProjection { rcond: rc });
    }
    let mut rhs = DMatrix::zeros(q, r);
    rhs.view_mut((q - r, 0), (r, r)).copy_from(&last_block_gram(h_last));
    if rhs.iter().all(|v| *v == 0.0) {
        return Ok(rhs);
    }
    h.transpose().lu().solve(&rhs).ok_or(Error::SingularProjection { rcond: rc })
}

/// `G = [E_{m+1} H_{m+1,m}, Ibar Y E_m, Ibar M]` and the core `[[0,I,0],[I,0,-I],[0,-I,0]]`.
pub fn residual_factors(y: &DMatrix<f64>, modification: &DMatrix<f64>, h_last: &DMatrix<f64>) -> Result<ResidualFactor> {
    let q = y.nrows();
    let r = h_last.nrows();
    check_shapes(y, modification, h_last)?;
    let mut g = DMatrix::zeros(q + r, 3 * r);
    g.view_mut((q, 0), (r, r)).copy_from(h_last);
    g.view_mut((0, r), (q, r)).copy_from(&y.columns(q - r, r));
    g.view_mut((0, 2 * r), (q, r)).copy_from(modification);
    Ok(ResidualFactor { g, core: signature_core(r) })
}

/// The `3r x 3r` core `[[0,I,0],[I,0,-I],[0,-I,0]]`.
pub fn signature_core(r: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(3 * r, 3 * r);
    for i in 0..r {
        l[(i, r + i)] = 1.0;
        l[(r + i, i)] = 1.0;
        l[(r + i, 2 * r + i)] = -1.0;
        l[(2 * r + i, r + i)] = -1.0;
    }
    l
}

fn check_shapes(y: &DMatrix<f64>, modification: &DMatrix<f64>, h_last: &DMatrix<f64>) -> Result<()> {
    let q = y.nrows();
    let r = h_last.nrows();
    if !y.is_square() || !h_last.is_square() || r == 0 || q < r || modification.shape() != (q, r) {
        return Err(Error::DimensionMismatch(format!(
            "Y {:?}, M {:?}, H_(m+1,m) {:?}",
            y.shape(),
            modification.shape(),
            h_last.shape()
        )));
    }
    Ok(())
}

/// `sqrt(2 (||Y E_m H^T||^2 + ||Y E_m M^T||^2 + tr((E_m^T Y M)^2)))`.
///
/// The last two terms are summed as `||B + B^T||^2 / 2` with `B = Y E_m M^T`. This is the
/// same quantity, but it avoids the cancellation of the trace form when `B` is nearly skew
/// (large `M`).
pub fn residual_norm(y: &DMatrix<f64>, modification: &DMatrix<f64>, h_last: &DMatrix<f64>) -> Result<f64> {
    check_shapes(y, modification, h_last)?;
    let (q, r) = (y.nrows(), h_last.nrows());
    let p = y.columns(q - r, r);
    let a = (&p * h_last.transpose()).norm_squared();
    let b = &p * modification.transpose();
    Ok((2.0 * a + (&b + b.transpose()).norm_squared()).sqrt())
}

/// `E_1 Gamma L Gamma^T E_1^T` as an `mr x mr` matrix; `core = None` means `L = I`.
pub fn projected_rhs(gamma: &DMatrix<f64>, core: Option<&DMatrix<f64>>, q: usize) -> DMatrix<f64> {
    let r = gamma.nrows();
    let small = match core {
        Some(l) => gamma * l * gamma.transpose(),
        None => gamma * gamma.transpose(),
    };
    let mut s = DMatrix::zeros(q, q);
    s.view_mut((0, 0), (r, r)).copy_from(&crate::densela::symmetrize(&small));
    s
}

/// Solves the modified projected Lyapunov equation for `Galerkin`, `Pmr` or `Nks`
/// (the latter with an explicit `modification`), or the MR least-squares problem.
///
/// `modification` overrides the method's own choice of `M`.
pub fn solve_projected(arn: &BlockArnoldi, method: Method, modification: Option<&DMatrix<f64>>) -> Result<ProjectedSolution> {
    match method {
        Method::Mr => solve_mr(arn, &DenseConfig::from_env(), None),
        Method::Nks if modification.is_none() => solve_nks(arn, None, &NksOptions::default()),
        _ => solve_projected_with_core(arn, method, modification, None),
    }
}

/// Galerkin-family solve with right-hand side `E_1 Gamma L Gamma^T E_1^T`.
pub fn solve_projected_with_core(
    arn: &BlockArnoldi,
    method: Method,
    modification: Option<&DMatrix<f64>>,
    core: Option<&DMatrix<f64>>,
) -> Result<ProjectedSolution> {
    let m = arn.steps();
    if m == 0 {
        return Err(Error::InvalidArgument("projected solve needs at least one Arnoldi step".into()));
    }
    let r = arn.block_size();
    let q = m * r;
    let h = arn.h_square();
    let h_last = arn.h_last();
    let modification = match (modification, method) {
        (Some(mm), _) => mm.clone(),
        (None, Method::Galerkin) => DMatrix::zeros(q, r),
        (None, Method::Pmr) => pmr_modification(&h, &h_last)?,
        (None, other) => return Err(Error::UnsupportedMethod(format!("{other} needs an explicit modification here"))),
    };
    if modification.shape() != (q, r) {
        return Err(Error::DimensionMismatch(format!("modification {:?}, expected {:?}", modification.shape(), (q, r))));
    }
    let s = projected_rhs(arn.gamma(), core, q);
    let y = solve_modified(&h, &modification, &s)?;
    let res_norm = residual_norm(&y, &modification, &h_last)?;
    let res_factor = residual_factors(&y, &modification, &h_last)?;
    Ok(ProjectedSolution { method, y, modification, res_norm, res_factor, mr_path: None, nks: None })
}

/// Solves `(H + M E_m^T) Y + Y (H + M E_m^T)^T + S = 0`.
pub(crate) fn solve_modified(h: &DMatrix<f64>, modification: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_small_lyapunov(&modified_matrix(h, modification), s)
}

/// `H + M E_m^T`.
pub fn modified_matrix(h: &DMatrix<f64>, modification: &DMatrix<f64>) -> DMatrix<f64> {
    let (q, r) = modification.shape();
    let mut f = h.clone();
    let mut last = f.columns_mut(q - r, r);
    last += modification;
    f
}

/// Minimal-residual solution; `warm` seeds the iterative least-squares path.
pub fn solve_mr(arn: &BlockArnoldi, cfg: &DenseConfig, warm: Option<&DMatrix<f64>>) -> Result<ProjectedSolution> {
    let m = arn.steps();
    if m == 0 {
        return Err(Error::InvalidArgument("MR solve needs at least one Arnoldi step".into()));
    }
    let r = arn.block_size();
    let q = m * r;
    let hbar = arn.hbar();
    let ls = solve_matrix_least_squares(hbar, arn.gamma(), cfg, warm)?;
    let zero = DMatrix::zeros(q, r);
    let res_factor = residual_factors(&ls.y, &zero, &arn.h_last())?;
    Ok(ProjectedSolution {
        method: Method::Mr,
        y: ls.y,
        modification: zero,
        res_norm: ls.minimum,
        res_factor,
        mr_path: Some(ls.path),
        nks: None,
    })
}
