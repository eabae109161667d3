//! Primal-dual interior-point reference solver.
//!
//! Each iteration is a damped Newton step on the perturbed KKT system with
//! slack variables and a logarithmic barrier. The barrier `μ` starts at
//! `mu0` and is multiplied by `mu_shrink` whenever the perturbed residual
//! falls below `10·μ`. None of these decisions depend on `tol`, so runs
//! with different tolerances share their iterate prefix.

mod newton;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use newton::{newton_step, solve_acopf, NewtonWorkspace, StepInfo};
pub use trace::{read_trace_jsonl, write_trace_jsonl, IterationTrace, SolveStatus, TraceRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence tolerance on `‖x^{k+1} − x^k‖₂` (per-unit).
    pub tol: f64,
    /// Iteration budget; exhausting it marks the scenario infeasible.
    pub max_iter: usize,
    /// Upper limit on the Newton step length.
    pub alpha_max: f64,
    pub mu0: f64,
    pub mu_shrink: f64,
    /// Barrier floor, reached only on very tight tolerances.
    pub mu_min: f64,
    /// Fraction-to-boundary parameter.
    pub ftb: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-4,
            max_iter: 200,
            alpha_max: 1.0,
            mu0: 0.1,
            mu_shrink: 0.2,
            mu_min: 1e-11,
            ftb: 0.995,
        }
    }
}

impl SolverOptions {
    /// Tolerance used when harvesting training data.
    pub const DATA_TOL: f64 = 1e-9;
    /// Tolerance used when comparing against the learned iterator.
    pub const TEST_TOL: f64 = 1e-4;

    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.alpha_max > 0.0 && self.alpha_max <= 1.0) {
            return bad("alpha_max must lie in (0, 1]");
        }
        if !(self.mu0 > 0.0) {
            return bad("mu0 must be positive");
        }
        if !(self.mu_shrink > 0.0 && self.mu_shrink < 1.0) {
            return bad("mu_shrink must lie in (0, 1)");
        }
        if !(self.ftb > 0.0 && self.ftb < 1.0) {
            return bad("ftb must lie in (0, 1)");
        }
        if !(self.mu_min > 0.0) {
            return bad("mu_min must be positive");
        }
        Ok(())
    }
}

/// `‖x_next − x_prev‖₂ ≤ tol`, inclusive. Shared by both solvers.
///
/// # Panics
/// If the slices differ in length.
pub fn check_convergence(x_prev: &[f64], x_next: &[f64], tol: f64) -> bool {
    step_norm(x_prev, x_next) <= tol
}

pub fn step_norm(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "state dimensions differ");
    a.iter()
        .zip(b)
        .map(|(p, q)| (q - p) * (q - p))
        .sum::<f64>()
        .sqrt()
}
