//! Evaluation of the learned iterator against the reference solver:
//! accuracy and feasibility metrics, timing, iteration curves and the
//! real-time tracking simulation.

mod bench;
mod curves;
mod metrics;
mod tracking;

pub use bench::{benchmark, write_timing_csv, BackendTiming, BenchConfig, TimingReport};
pub use curves::{curves_csv, curves_svg, iteration_curves, CurveSeries};
pub use metrics::{compare, evaluate, mean_abs_error, write_metrics_csv, EvalReport, ScenarioRow};
pub use tracking::{
    tracking_sim, write_tracking_csv, LoadWalk, Published, TickRecord, TrackingConfig,
    TrackingReport,
};

use crate::acopf::StateVector;
use crate::error::Result;
use crate::grid::{Network, Scenario};
use crate::learned::{fixed_point_solve, CompiledMlp};
use crate::solver::{solve_acopf, IterationTrace, SolverOptions};

/// Something that maps a load scenario to an OPF state from flat start.
pub trait Backend: Sync {
    fn name(&self) -> &str;
    fn solve(&self, net: &Network, sc: &Scenario) -> Result<(StateVector, IterationTrace)>;
}

/// The interior-point solver.
#[derive(Clone, Debug)]
pub struct Reference {
    pub opts: SolverOptions,
}

impl Reference {
    pub fn new(opts: SolverOptions) -> Self {
        Reference { opts }
    }
}

impl Backend for Reference {
    fn name(&self) -> &str {
        "reference"
    }

    fn solve(&self, net: &Network, sc: &Scenario) -> Result<(StateVector, IterationTrace)> {
        let (x, _, trace) = solve_acopf(net, sc, &self.opts, &StateVector::flat_start(net))?;
        Ok((x, trace))
    }
}

/// The network iterated to a fixed point.
#[derive(Clone, Debug)]
pub struct Learned<'m> {
    pub model: &'m CompiledMlp,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'m> Learned<'m> {
    pub fn new(model: &'m CompiledMlp, tol: f64, max_iter: usize) -> Self {
        Learned {
            model,
            tol,
            max_iter,
        }
    }
}

impl Backend for Learned<'_> {
    fn name(&self) -> &str {
        "learned"
    }

    fn solve(&self, net: &Network, sc: &Scenario) -> Result<(StateVector, IterationTrace)> {
        fixed_point_solve(self.model, net, sc, self.tol, self.max_iter)
    }
}
