//! Subcommands. Each reports whether its runs converged; any error maps to exit code 1.

use std::collections::{BTreeMap, BTreeSet};

use anyhow::{bail, Context, Result};
use lyakrylov::arnoldi::BlockArnoldi;
use lyakrylov::diagnostics::{
    modification_difference, pmr_mr_distance_bound, ritz_value_function_max, solution_spectrum, BoundValue, BoundVariant,
    Definiteness, RitzMax,
};
use lyakrylov::restart::{run_restarted, RestartOptions};
use lyakrylov::solvers::{j_matrix, run_solver_observed, Method, ProjectedSolution, SolveReport, SolverOptions, StopReason};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::output::{num, opt_num, CsvFile, OutputDir};
use crate::problem::{self, Problem};
use crate::svg::{ColorScale, Heatmap, LineChart, Scale, Series};

/// Largest projected order for which per-iteration eigendecompositions are attempted.
pub const DIAGNOSTIC_CAP: usize = 600;
/// Largest projected order for which the final solution spectrum is computed.
pub const SPECTRUM_CAP: usize = 2000;
/// `|relres_NKS - relres_MR|` above this counts as a genuine difference.
pub const CONJECTURE_GAP: f64 = 1e-13;
/// Largest relative NKS/MR gap accepted before convergence.
pub const CONJECTURE_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    NotConverged,
}

impl Outcome {
    fn from_flag(ok: bool) -> Self {
        if ok {
            Self::Converged
        } else {
            Self::NotConverged
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Self::Converged => 0,
            Self::NotConverged => 2,
        }
    }
}

const HISTORY_HEADER: [&str; 5] = ["iter", "method", "relres", "matvecs", "cum_seconds"];

fn stop_name(stop: &StopReason) -> String {
    match stop {
        StopReason::Converged => "converged".into(),
        StopReason::Exhausted => "exhausted".into(),
        StopReason::Breakdown => "breakdown".into(),
        StopReason::MaxIterations => "max_iterations".into(),
        StopReason::Failed(msg) => format!("failed ({msg})"),
    }
}

fn options(cfg: &ExperimentConfig, method: Method, p: &Problem) -> SolverOptions {
    SolverOptions::new(method, cfg.m_max_for(p.n(), p.rank()), cfg.tol)
}

fn write_history(csv: &mut CsvFile, report: &SolveReport) -> Result<()> {
    for rec in &report.history {
        csv.row([rec.m.to_string(), report.method.to_string(), num(rec.rel_res), rec.matvecs.to_string(), num(rec.elapsed)])?;
    }
    Ok(())
}

fn summary(p: &Problem, report: &SolveReport) -> String {
    let last = report.history.last();
    format!(
        "summary: problem={} n={} rank={} method={} converged={} stop={} iterations={} relres={} matvecs={} seconds={:.3}",
        p.label,
        p.n(),
        p.rank(),
        report.method,
        report.converged,
        stop_name(&report.stop),
        report.history.len(),
        opt_num(report.final_rel_res()),
        last.map_or(0, |r| r.matvecs),
        last.map_or(0.0, |r| r.elapsed),
    )
}

fn residual_series(report: &SolveReport) -> Series {
    Series { name: report.method.to_string(), points: report.history.iter().map(|r| (r.m as f64, r.rel_res)).collect() }
}

fn residual_chart(title: String, x_label: &str, series: Vec<Series>) -> LineChart {
    LineChart { title, x_label: x_label.into(), y_label: "relative residual (log10)".into(), y_scale: Scale::Log10, series }
}

pub fn solve(cfg: &ExperimentConfig) -> Result<Outcome> {
    let method = cfg.single_method(Method::Galerkin)?;
    let p = problem::load(&cfg.problem, cfg.rank()?, cfg.seed)?;
    let out = OutputDir::create(&cfg.out)?;
    let report = run_solver_observed(&p.a, &p.c, &options(cfg, method, &p), |_, _, _| {})?;
    let mut csv = out.csv("solve.csv", "iterations", &HISTORY_HEADER)?;
    write_history(&mut csv, &report)?;
    csv.finish()?;
    println!("{}", summary(&p, &report));
    Ok(Outcome::from_flag(report.converged))
}

/// Ritz-function maximum at one iteration, with a status when it is not a finite number.
#[derive(Debug, Clone)]
struct RitzRow {
    value: Option<f64>,
    status: &'static str,
    defective: Option<bool>,
    note: String,
}

fn ritz_row(h: &DMatrix<f64>) -> RitzRow {
    if h.nrows() > DIAGNOSTIC_CAP {
        return RitzRow {
            value: None,
            status: "skipped",
            defective: None,
            note: format!("order {} above {DIAGNOSTIC_CAP}", h.nrows()),
        };
    }
    match ritz_value_function_max(h) {
        Ok(rep) => match rep.value {
            RitzMax::Finite(v) => RitzRow { value: Some(v), status: "ok", defective: Some(rep.defective), note: String::new() },
            RitzMax::Infinite => {
                RitzRow { value: Some(f64::INFINITY), status: "infinite", defective: Some(rep.defective), note: String::new() }
            }
        },
        Err(e) => RitzRow { value: None, status: "unavailable", defective: None, note: e.to_string() },
    }
}

pub fn compare(cfg: &ExperimentConfig) -> Result<Outcome> {
    let methods = cfg.methods.clone();
    let distinct: BTreeSet<Method> = methods.iter().copied().collect();
    if methods.len() < 2 || distinct.len() != methods.len() {
        bail!("compare needs at least two distinct methods, got {:?}", cfg.methods.iter().map(|m| m.name()).collect::<Vec<_>>());
    }
    let p = problem::load(&cfg.problem, cfg.rank()?, cfg.seed)?;
    let out = OutputDir::create(&cfg.out)?;

    // The Arnoldi process does not depend on the method, so each iteration's H is shared.
    let mut ritz: BTreeMap<usize, RitzRow> = BTreeMap::new();
    let mut reports = Vec::new();
    for &method in &methods {
        let report = run_solver_observed(&p.a, &p.c, &options(cfg, method, &p), |arn, _, rec| {
            ritz.entry(rec.m).or_insert_with(|| ritz_row(&arn.h_square()));
        })?;
        println!("{}", summary(&p, &report));
        reports.push(report);
    }

    let mut csv = out.csv("compare.csv", "iterations", &HISTORY_HEADER)?;
    for report in &reports {
        write_history(&mut csv, report)?;
    }
    csv.finish()?;
    let title = format!("{} (n = {}, r = {})", p.label, p.n(), p.rank());
    out.write_text(
        "compare.svg",
        &residual_chart(title.clone(), "iteration", reports.iter().map(residual_series).collect()).render(),
    )?;

    let mut csv = out.csv("ritz.csv", "ritz", &["iter", "ritz_max", "status", "defective", "note"])?;
    for (m, row) in &ritz {
        csv.row([
            m.to_string(),
            opt_num(row.value),
            row.status.into(),
            row.defective.map(|d| d.to_string()).unwrap_or_default(),
            row.note.clone(),
        ])?;
    }
    csv.finish()?;
    let ritz_points = ritz.iter().filter_map(|(m, row)| row.value.map(|v| (*m as f64, v))).collect();
    let chart = LineChart {
        title: format!("Ritz-value function, {title}"),
        x_label: "iteration".into(),
        y_label: "max f (log10)".into(),
        y_scale: Scale::Log10,
        series: vec![Series { name: "max f".into(), points: ritz_points }],
    };
    out.write_text("ritz.svg", &chart.render())?;

    let mut csv = out.csv("spectrum.csv", "spectrum", &["method", "index", "eigenvalue"])?;
    let mut spectra = Vec::new();
    for report in &reports {
        let Some(sol) = &report.solution else { continue };
        if sol.y.nrows() > SPECTRUM_CAP {
            eprintln!("note: {} solution of order {} exceeds the spectrum cap {SPECTRUM_CAP}", report.method, sol.y.nrows());
            continue;
        }
        let spec = solution_spectrum(&sol.y, Definiteness::PositiveSemidefinite)?;
        let mut eig = spec.eigenvalues.clone();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (i, v) in eig.iter().enumerate() {
            csv.row([report.method.to_string(), (i + 1).to_string(), num(*v)])?;
        }
        spectra.push(Series {
            name: report.method.to_string(),
            points: eig.iter().enumerate().map(|(i, v)| ((i + 1) as f64, v.abs())).collect(),
        });
    }
    csv.finish()?;
    let chart = LineChart {
        title: format!("Solution spectra, {title}"),
        x_label: "index".into(),
        y_label: "|eigenvalue| (log10)".into(),
        y_scale: Scale::Log10,
        series: spectra,
    };
    out.write_text("spectrum.svg", &chart.render())?;

    Ok(Outcome::from_flag(reports.iter().all(|r| r.converged)))
}

#[derive(Debug, Clone)]
struct SweepRow {
    rank: usize,
    method: Method,
    converged: bool,
    stop: String,
    iterations: usize,
    seconds: f64,
    matvecs: u64,
    rel_res: Option<f64>,
}

fn sweep_job(cfg: &ExperimentConfig, rank: usize, method: Method) -> Result<SweepRow> {
    let p = problem::load(&cfg.problem, rank, cfg.seed)?;
    let report = run_solver_observed(&p.a, &p.c, &options(cfg, method, &p), |_, _, _| {})
        .with_context(|| format!("{method} at rank {rank}"))?;
    println!("{}", summary(&p, &report));
    let last = report.history.last();
    Ok(SweepRow {
        rank,
        method,
        converged: report.converged,
        stop: stop_name(&report.stop),
        iterations: report.history.len(),
        seconds: last.map_or(0.0, |r| r.elapsed),
        matvecs: last.map_or(0, |r| r.matvecs),
        rel_res: report.final_rel_res(),
    })
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0 && a.is_finite()).then(|| a / b)
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut methods = if cfg.methods.is_empty() { vec![Method::Galerkin, Method::Pmr, Method::Mr] } else { cfg.methods.clone() };
    methods.push(Method::Galerkin);
    methods.sort();
    methods.dedup();
    let mut ranks = cfg.ranks.clone();
    ranks.sort_unstable();
    ranks.dedup();
    let out = OutputDir::create(&cfg.out)?;

    let jobs: Vec<(usize, Method)> = ranks.iter().flat_map(|&r| methods.iter().map(move |&m| (r, m))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build().context("cannot start worker pool")?;
    let rows = pool.install(|| jobs.par_iter().map(|&(r, m)| sweep_job(cfg, r, m)).collect::<Vec<_>>());
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let baseline: BTreeMap<usize, &SweepRow> =
        rows.iter().filter(|r| r.method == Method::Galerkin).map(|r| (r.rank, r)).collect();
    let ratios = |row: &SweepRow| {
        let g = baseline[&row.rank];
        (
            ratio(row.iterations as f64, g.iterations as f64),
            ratio(row.seconds, g.seconds),
            ratio(row.matvecs as f64, g.matvecs as f64),
        )
    };

    let header = [
        "rank",
        "method",
        "converged",
        "stop",
        "iterations",
        "seconds",
        "matvecs",
        "relres",
        "iter_ratio",
        "time_ratio",
        "matvec_ratio",
    ];
    let mut csv = out.csv("sweep.csv", "sweep", &header)?;
    for row in &rows {
        let (it, tm, mv) = ratios(row);
        csv.row([
            row.rank.to_string(),
            row.method.to_string(),
            row.converged.to_string(),
            row.stop.clone(),
            row.iterations.to_string(),
            num(row.seconds),
            row.matvecs.to_string(),
            opt_num(row.rel_res),
            opt_num(it),
            opt_num(tm),
            opt_num(mv),
        ])?;
    }
    csv.finish()?;

    let grid = |pick: &dyn Fn(&SweepRow) -> Option<f64>| -> Vec<Vec<Option<f64>>> {
        methods
            .iter()
            .map(|&m| ranks.iter().map(|&r| rows.iter().find(|row| row.method == m && row.rank == r).and_then(pick)).collect())
            .collect()
    };
    let heatmap = |title: &str, values, scale| Heatmap {
        title: format!("{title}, {}", cfg.problem),
        row_label: "method".into(),
        col_label: "rank".into(),
        rows: methods.iter().map(|m| m.to_string()).collect(),
        cols: ranks.iter().map(|r| r.to_string()).collect(),
        values,
        scale,
    };
    let maps = [
        ("sweep_iterations.svg", heatmap("Iterations relative to Galerkin", grid(&|r| ratios(r).0), ColorScale::Ratio)),
        ("sweep_time.svg", heatmap("Time relative to Galerkin", grid(&|r| ratios(r).1), ColorScale::Ratio)),
        ("sweep_matvecs.svg", heatmap("Matrix-vector products", grid(&|r| Some(r.matvecs as f64)), ColorScale::Magnitude)),
    ];
    for (file, map) in maps {
        out.write_text(file, &map.render())?;
    }
    Ok(Outcome::from_flag(rows.iter().all(|r| r.converged)))
}

pub fn restart(cfg: &ExperimentConfig) -> Result<Outcome> {
    let method = cfg.single_method(Method::Pmr)?;
    let mem_max = cfg.mem_max.context("restart needs --memmax")?;
    let p = problem::load(&cfg.problem, cfg.rank()?, cfg.seed)?;
    let out = OutputDir::create(&cfg.out)?;
    let opts = RestartOptions { method, mem_max, tol: cfg.tol, k_max: cfg.k_max, compress_tol: cfg.compress_tol };
    let outcome = run_restarted(&p.a, &p.c, &opts)?;

    let header = ["cycle", "method", "block_size", "steps", "relres", "next_rank", "compression_error", "matvecs", "cum_seconds"];
    let mut csv = out.csv("restart.csv", "restart", &header)?;
    for (cycle, rec) in outcome.cycles.iter().zip(&outcome.report.history) {
        csv.row([
            cycle.cycle.to_string(),
            method.to_string(),
            cycle.block_size.to_string(),
            cycle.steps.to_string(),
            num(cycle.rel_res),
            cycle.next_rank.to_string(),
            num(cycle.compression_error),
            rec.matvecs.to_string(),
            num(rec.elapsed),
        ])?;
    }
    csv.finish()?;

    let title = format!("{} (n = {}, r = {}, memmax = {mem_max})", p.label, p.n(), p.rank());
    let residuals =
        Series { name: method.to_string(), points: outcome.cycles.iter().map(|c| (c.cycle as f64, c.rel_res)).collect() };
    out.write_text("restart.svg", &residual_chart(title.clone(), "cycle", vec![residuals]).render())?;
    let ranks = LineChart {
        title: format!("Compression ranks, {title}"),
        x_label: "cycle".into(),
        y_label: "columns".into(),
        y_scale: Scale::Linear,
        series: vec![
            Series { name: "p_k".into(), points: outcome.cycles.iter().map(|c| (c.cycle as f64, c.block_size as f64)).collect() },
            Series { name: "steps".into(), points: outcome.cycles.iter().map(|c| (c.cycle as f64, c.steps as f64)).collect() },
        ],
    };
    out.write_text("restart_ranks.svg", &ranks.render())?;

    let mut line = summary(&p, &outcome.report);
    line.push_str(&format!(" cycles={}", outcome.cycles.len()));
    println!("{line}");
    Ok(Outcome::from_flag(outcome.report.converged))
}

/// Verdict of the NKS-equals-MR check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjectureCheck {
    /// First iteration where NKS and MR residuals differ by more than [`CONJECTURE_GAP`].
    pub falsified_at: Option<usize>,
    /// Largest `|NKS - MR| / MR` over iterations where MR has not reached `tol`.
    pub max_relative_gap: f64,
}

impl ConjectureCheck {
    pub fn new(mr: &BTreeMap<usize, f64>, nks: &BTreeMap<usize, f64>, tol: f64) -> Self {
        let mut falsified_at = None;
        let mut max_relative_gap = 0.0_f64;
        for (m, &a) in mr {
            let Some(&b) = nks.get(m) else { continue };
            if falsified_at.is_none() && (b - a).abs() > CONJECTURE_GAP {
                falsified_at = Some(*m);
            }
            if a > tol {
                max_relative_gap = max_relative_gap.max((b - a).abs() / a);
            }
        }
        Self { falsified_at, max_relative_gap }
    }

    pub fn holds(&self) -> bool {
        self.falsified_at.is_some() && self.max_relative_gap < CONJECTURE_SLACK
    }
}

pub fn kron_conj(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = problem::load(&cfg.problem, cfg.rank()?, cfg.seed)?;
    let out = OutputDir::create(&cfg.out)?;

    let mut histories: BTreeMap<Method, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut mods: BTreeMap<(Method, usize), DMatrix<f64>> = BTreeMap::new();
    let mut reports = Vec::new();
    for method in Method::ALL {
        let mut opts = options(cfg, method, &p);
        opts.run_to_max = true;
        let report = run_solver_observed(&p.a, &p.c, &opts, |_, sol: &ProjectedSolution, rec| {
            if matches!(method, Method::Pmr | Method::Nks) {
                mods.insert((method, rec.m), sol.modification.clone());
            }
        })?;
        println!("{}", summary(&p, &report));
        histories.insert(method, report.history.iter().map(|r| (r.m, r.rel_res)).collect());
        reports.push(report);
    }

    let last = histories.values().filter_map(|h| h.keys().next_back().copied()).max().unwrap_or(0);
    let m_diff = |m: usize| match (mods.get(&(Method::Pmr, m)), mods.get(&(Method::Nks, m))) {
        (Some(a), Some(b)) => modification_difference(a, b).ok(),
        _ => None,
    };
    let header = ["iter", "relres_galerkin", "relres_pmr", "relres_mr", "relres_nks", "m_diff"];
    let mut csv = out.csv("kron_conj.csv", "kron-conj", &header)?;
    let mut diff_points = Vec::new();
    for m in 1..=last {
        let mut row = vec![m.to_string()];
        row.extend(Method::ALL.iter().map(|meth| opt_num(histories[meth].get(&m).copied())));
        let d = m_diff(m);
        if let Some(d) = d {
            diff_points.push((m as f64, d));
        }
        row.push(opt_num(d));
        csv.row(row)?;
    }
    csv.finish()?;

    let mut series: Vec<Series> = reports.iter().map(residual_series).collect();
    series.push(Series { name: "M-diff".into(), points: diff_points });
    let title = format!("{} (n = {}, r = {})", p.label, p.n(), p.rank());
    out.write_text("kron_conj.svg", &residual_chart(title, "iteration", series).render())?;

    let check = ConjectureCheck::new(&histories[&Method::Mr], &histories[&Method::Nks], cfg.tol);
    match check.falsified_at {
        Some(m) => {
            let gap = (histories[&Method::Nks][&m] - histories[&Method::Mr][&m]).abs();
            println!("conjecture: falsified at iteration {m} (|relres_nks - relres_mr| = {gap:e})");
        }
        None => println!("conjecture: not falsified (NKS and MR agree to {CONJECTURE_GAP:e} at every iteration)"),
    }
    println!("max relative NKS/MR gap before convergence: {:e} (limit {CONJECTURE_SLACK})", check.max_relative_gap);
    let finals: Vec<String> = reports.iter().map(|r| format!("{}={}", r.method, opt_num(r.final_rel_res()))).collect();
    println!("final relres: {}", finals.join(" "));
    Ok(Outcome::from_flag(check.holds() && reports.iter().all(|r| r.converged)))
}

struct DiagnosticRow {
    m: usize,
    rel_res: f64,
    ritz: RitzRow,
    bounds: [(Option<f64>, &'static str); 2],
    y_range: Option<(f64, f64, usize)>,
    notes: Vec<String>,
}

fn bound_cell(
    arn: &BlockArnoldi,
    h: &DMatrix<f64>,
    j: &DMatrix<f64>,
    variant: BoundVariant,
    notes: &mut Vec<String>,
) -> (Option<f64>, &'static str) {
    match pmr_mr_distance_bound(h, j, arn.block_size(), variant) {
        Ok(BoundValue::Value(v)) if v.is_finite() => (Some(v), "ok"),
        Ok(BoundValue::Value(v)) => (Some(v), "infinite"),
        Ok(BoundValue::Unavailable(msg)) => {
            notes.push(format!("{variant:?}: {msg}"));
            (None, "unavailable")
        }
        Err(e) => {
            notes.push(format!("{variant:?}: {e}"));
            (None, "unavailable")
        }
    }
}

fn diagnostic_row(arn: &BlockArnoldi, sol: &ProjectedSolution, m: usize, rel_res: f64) -> DiagnosticRow {
    let q = sol.y.nrows();
    if q > DIAGNOSTIC_CAP {
        let skipped = (None, "skipped");
        return DiagnosticRow {
            m,
            rel_res,
            ritz: ritz_row(&arn.h_square()),
            bounds: [skipped, skipped],
            y_range: None,
            notes: vec![format!("order {q} above {DIAGNOSTIC_CAP}")],
        };
    }
    let h = arn.h_square();
    let j = j_matrix(arn);
    let mut notes = Vec::new();
    let ritz = ritz_row(&h);
    if !ritz.note.is_empty() {
        notes.push(format!("ritz: {}", ritz.note));
    }
    let bounds = [
        bound_cell(arn, &h, &j, BoundVariant::Frobenius, &mut notes),
        bound_cell(arn, &h, &j, BoundVariant::Spectral, &mut notes),
    ];
    let y_range = match solution_spectrum(&sol.y, Definiteness::PositiveSemidefinite) {
        Ok(s) => Some((s.min, s.max, s.violations)),
        Err(e) => {
            notes.push(format!("spectrum: {e}"));
            None
        }
    };
    DiagnosticRow { m, rel_res, ritz, bounds, y_range, notes }
}

pub fn diagnose(cfg: &ExperimentConfig) -> Result<Outcome> {
    let method = cfg.single_method(Method::Pmr)?;
    let p = problem::load(&cfg.problem, cfg.rank()?, cfg.seed)?;
    let out = OutputDir::create(&cfg.out)?;
    let mut rows = Vec::new();
    let report = run_solver_observed(&p.a, &p.c, &options(cfg, method, &p), |arn, sol, rec| {
        rows.push(diagnostic_row(arn, sol, rec.m, rec.rel_res));
    })?;

    let header = [
        "iter",
        "method",
        "relres",
        "ritz_max",
        "ritz_status",
        "defective",
        "bound_frobenius",
        "frobenius_status",
        "bound_spectral",
        "spectral_status",
        "y_min",
        "y_max",
        "psd_violations",
        "note",
    ];
    let mut csv = out.csv("diagnose.csv", "diagnose", &header)?;
    for row in &rows {
        let [(bf, sf), (bs, ss)] = row.bounds;
        csv.row([
            row.m.to_string(),
            method.to_string(),
            num(row.rel_res),
            opt_num(row.ritz.value),
            row.ritz.status.into(),
            row.ritz.defective.map(|d| d.to_string()).unwrap_or_default(),
            opt_num(bf),
            sf.into(),
            opt_num(bs),
            ss.into(),
            opt_num(row.y_range.map(|r| r.0)),
            opt_num(row.y_range.map(|r| r.1)),
            row.y_range.map(|r| r.2.to_string()).unwrap_or_default(),
            row.notes.join("; "),
        ])?;
    }
    csv.finish()?;

    let pick = |name: &str, f: &dyn Fn(&DiagnosticRow) -> Option<f64>| Series {
        name: name.into(),
        points: rows.iter().filter_map(|r| f(r).map(|v| (r.m as f64, v))).collect(),
    };
    let chart = LineChart {
        title: format!("Diagnostics, {} (n = {}, r = {})", p.label, p.n(), p.rank()),
        x_label: "iteration".into(),
        y_label: "value (log10)".into(),
        y_scale: Scale::Log10,
        series: vec![
            pick("relres", &|r| Some(r.rel_res)),
            pick("ritz max", &|r| r.ritz.value),
            pick("bound (Frobenius)", &|r| r.bounds[0].0),
            pick("bound (spectral)", &|r| r.bounds[1].0),
        ],
    };
    out.write_text("diagnose.svg", &chart.render())?;

    let flagged = rows.iter().filter(|r| r.ritz.status != "ok" || r.bounds.iter().any(|b| b.1 != "ok")).count();
    println!("{} flagged_rows={flagged}", summary(&p, &report));
    Ok(Outcome::from_flag(report.converged))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjecture_check_needs_a_gap_and_closeness() {
        let mr: BTreeMap<usize, f64> = [(1, 0.5), (2, 0.1), (3, 1e-14)].into();
        let same = mr.clone();
        assert_eq!(ConjectureCheck::new(&mr, &same, 1e-6).falsified_at, None);
        let near: BTreeMap<usize, f64> = [(1, 0.5), (2, 0.101), (3, 1e-14)].into();
        let c = ConjectureCheck::new(&mr, &near, 1e-6);
        assert_eq!(c.falsified_at, Some(2));
        assert!(c.holds());
        let far: BTreeMap<usize, f64> = [(1, 0.5), (2, 0.2), (3, 1e-14)].into();
        assert!(!ConjectureCheck::new(&mr, &far, 1e-6).holds());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Outcome::Converged.exit_code(), 0);
        assert_eq!(Outcome::NotConverged.exit_code(), 2);
    }
}
