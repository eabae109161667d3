use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Backend, Learned, Reference};
use crate::acopf::{cost, power_mismatch, StateVector};
use crate::error::{Error, Result};
use crate::grid::{Network, Scenario};
use crate::learned::CompiledMlp;
use crate::solver::SolverOptions;

/// Per-scenario comparison of a candidate solution with the reference optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: usize,
    pub seed: u64,
    pub ref_converged: bool,
    pub nn_converged: bool,
    pub ref_iterations: usize,
    pub nn_iterations: usize,
    /// $/h.
    pub ref_cost: f64,
    pub nn_cost: f64,
    /// Absolute percentage error of the cost; `None` when the reference
    /// cost is zero.
    pub ape_cost: Option<f64>,
    /// Mean |Δv| over buses, per-unit.
    pub mae_v: f64,
    /// Mean |ΔPg| over in-service generators, MW.
    pub mae_p: f64,
    /// Mean |power mismatch| at the candidate solution, per-unit.
    pub violation: f64,
    /// Entries of the candidate state outside the clamp box.
    pub clamp_violations: usize,
}

impl ScenarioRow {
    /// Both solves converged, so the row enters the averages.
    pub fn included(&self) -> bool {
        self.ref_converged && self.nn_converged
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ScenarioRow>,
    pub mae_v: f64,
    pub mae_p: f64,
    /// Percent.
    pub mape_cost: f64,
    pub mean_violation: f64,
    /// Fraction of all scenarios on which the candidate converged.
    pub convergence_rate: f64,
    pub n_included: usize,
    pub n_ref_failed: usize,
    pub n_nn_failed: usize,
    /// Included rows left out of the MAPE because the reference cost is zero.
    pub n_mape_excluded: usize,
    /// Summed over all rows, converged or not.
    pub clamp_violations: usize,
}

/// `mean |a_i − b_i|`.
pub fn mean_abs_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mean_abs_error: length mismatch");
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Learned model against the reference solver at `tol`, both from flat start.
pub fn evaluate(
    model: &CompiledMlp,
    net: &Network,
    scenarios: &[Scenario],
    tol: f64,
    max_iter: usize,
) -> Result<EvalReport> {
    let reference = Reference::new(SolverOptions::with_tol(tol));
    let learned = Learned::new(model, tol, max_iter);
    let p = model.params();
    compare(
        &reference,
        &learned,
        net,
        scenarios,
        (&p.clamp_lo, &p.clamp_hi),
    )
}

/// Any candidate backend against a reference backend. `clamp` is the box
/// the candidate's outputs must lie in.
pub fn compare(
    reference: &dyn Backend,
    candidate: &dyn Backend,
    net: &Network,
    scenarios: &[Scenario],
    clamp: (&[f64], &[f64]),
) -> Result<EvalReport> {
    if scenarios.is_empty() {
        return Err(Error::InvalidArgument("no scenarios to evaluate".into()));
    }
    if clamp.0.len() != net.n_state() || clamp.1.len() != net.n_state() {
        return Err(Error::Dimension(
            "clamp box does not match the network".into(),
        ));
    }
    let rows = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, sc)| {
            let (xr, tr) = reference.solve(net, sc)?;
            let (xn, tn) = candidate.solve(net, sc)?;
            row(
                net,
                sc,
                i,
                (&xr, tr.converged(), tr.iterations()),
                (&xn, tn.converged(), tn.iterations()),
                clamp,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(rows))
}

fn row(
    net: &Network,
    sc: &Scenario,
    i: usize,
    (xr, ref_converged, ref_iterations): (&StateVector, bool, usize),
    (xn, nn_converged, nn_iterations): (&StateVector, bool, usize),
    (lo, hi): (&[f64], &[f64]),
) -> Result<ScenarioRow> {
    let (ref_cost, nn_cost) = (cost(net, xr), cost(net, xn));
    let ape_cost = (ref_cost != 0.0).then(|| 100.0 * ((nn_cost - ref_cost) / ref_cost).abs());
    let mis = power_mismatch(net, sc, xn)?;
    let flat = xn.flatten();
    let clamp_violations = flat
        .iter()
        .zip(lo.iter().zip(hi))
        .filter(|&(v, (l, h))| !(l <= v && v <= h))
        .count();
    let pg_mw = |x: &StateVector| x.pg.iter().map(|p| p * net.base_mva).collect::<Vec<_>>();
    Ok(ScenarioRow {
        scenario: i,
        seed: sc.seed,
        ref_converged,
        nn_converged,
        ref_iterations,
        nn_iterations,
        ref_cost,
        nn_cost,
        ape_cost,
        mae_v: mean_abs_error(&xn.v, &xr.v),
        mae_p: mean_abs_error(&pg_mw(xn), &pg_mw(xr)),
        violation: mis.iter().map(|m| m.abs()).sum::<f64>() / mis.len() as f64,
        clamp_violations,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn summarize(rows: Vec<ScenarioRow>) -> EvalReport {
    let inc = || rows.iter().filter(|r| r.included());
    let n_included = inc().count();
    EvalReport {
        mae_v: mean(inc().map(|r| r.mae_v)),
        mae_p: mean(inc().map(|r| r.mae_p)),
        mape_cost: mean(inc().filter_map(|r| r.ape_cost)),
        mean_violation: mean(inc().map(|r| r.violation)),
        convergence_rate: rows.iter().filter(|r| r.nn_converged).count() as f64 / rows.len() as f64,
        n_included,
        n_ref_failed: rows.iter().filter(|r| !r.ref_converged).count(),
        n_nn_failed: rows.iter().filter(|r| !r.nn_converged).count(),
        n_mape_excluded: inc().filter(|r| r.ape_cost.is_none()).count(),
        clamp_violations: rows.iter().map(|r| r.clamp_violations).sum(),
        rows,
    }
}

/// One row per scenario, then a `mean` row holding the report averages.
/// Contains no timings, so equal inputs give identical bytes.
pub fn write_metrics_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "scenario",
        "seed",
        "ref_converged",
        "nn_converged",
        "ref_iterations",
        "nn_iterations",
        "ref_cost",
        "nn_cost",
        "ape_cost_pct",
        "mae_v_pu",
        "mae_p_mw",
        "violation_pu",
        "clamp_violations",
    ])
    .map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.scenario.to_string(),
            r.seed.to_string(),
            r.ref_converged.to_string(),
            r.nn_converged.to_string(),
            r.ref_iterations.to_string(),
            r.nn_iterations.to_string(),
            r.ref_cost.to_string(),
            r.nn_cost.to_string(),
            r.ape_cost.map_or(String::new(), |v| v.to_string()),
            r.mae_v.to_string(),
            r.mae_p.to_string(),
            r.violation.to_string(),
            r.clamp_violations.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let conv = format!("{}", report.convergence_rate);
    w.write_record([
        "mean",
        "",
        "",
        &conv,
        "",
        "",
        "",
        "",
        &report.mape_cost.to_string(),
        &report.mae_v.to_string(),
        &report.mae_p.to_string(),
        &report.mean_violation.to_string(),
        &report.clamp_violations.to_string(),
    ])
    .map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

pub(super) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
