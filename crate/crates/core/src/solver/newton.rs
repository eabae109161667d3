use std::time::Instant;

use super::trace::{IterationTrace, SolveStatus};
use super::{step_norm, SolverOptions};
use crate::acopf::{Derivatives, DualState, OpfProblem, StateVector};
use crate::error::{Error, Result};
use crate::grid::{Network, Scenario};
use crate::sparse::{LdlFactor, LdlSymbolic, PatternAssembler};

/// Static regularization on the constraint block of the condensed matrix.
const DELTA_C: f64 = 1e-8;
const DELTA_FIRST: f64 = 1e-8;
const DELTA_MAX: f64 = 1e6;
const MAX_HALVINGS: usize = 10;
const REFINE_STEPS: usize = 3;
const SLACK_FLOOR: f64 = 1e-2;
/// A barrier subproblem counts as solved once `‖d_μ‖∞ ≤ KAPPA·μ`.
const KAPPA: f64 = 10.0;

/// Diagnostics for one accepted Newton step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub alpha: f64,
    /// Primal regularization that gave the correct inertia.
    pub delta: f64,
    /// `‖Δx‖₂` of the primal move actually taken.
    pub step_norm: f64,
    /// `‖d_μ‖∞` at the new point.
    pub residual: f64,
    /// Exact (`μ = 0`) KKT residual `‖d‖∞` at the new point.
    pub kkt: f64,
}

/// Problem data, factorization pattern and symbolic analysis for one
/// `(network, scenario)` pair. Reused across iterations of a solve.
pub struct NewtonWorkspace<'a> {
    problem: OpfProblem<'a>,
    assembler: PatternAssembler,
    symbolic: LdlSymbolic,
}

impl<'a> NewtonWorkspace<'a> {
    pub fn new(net: &'a Network, sc: &Scenario) -> Result<Self> {
        let problem = OpfProblem::new(net, sc)?;
        let assembler = problem.condensed_pattern();
        let symbolic = LdlSymbolic::new(&assembler.pattern)?;
        Ok(NewtonWorkspace {
            problem,
            assembler,
            symbolic,
        })
    }

    pub fn problem(&self) -> &OpfProblem<'a> {
        &self.problem
    }

    /// Slacks pushed off the bounds, duals on the central path for `mu`.
    pub fn initial_duals(&self, y: &[f64], mu: f64) -> DualState {
        let slacks: Vec<f64> = self
            .problem
            .inequality(y)
            .iter()
            .map(|h| (-h).max(SLACK_FLOOR))
            .collect();
        let mu_ineq = slacks.iter().map(|s| mu / s).collect();
        DualState {
            lambda: vec![0.0; self.problem.n_eq()],
            mu: mu_ineq,
            slacks,
        }
    }

    pub fn residual(&self, y: &[f64], dual: &DualState, barrier: f64) -> Vec<f64> {
        let der = self.problem.derivatives(y, &dual.lambda);
        self.problem.kkt_residual(&der, y, dual, barrier)
    }

    fn factor(&self, der: &Derivatives, sigma: &[f64]) -> Result<(LdlFactor, f64)> {
        let p = &self.problem;
        let (nx, ne) = (p.n_vars(), p.n_eq());
        let mut delta = 0.0;
        let mut packed = vec![0.0; self.assembler.pattern.nnz()];
        loop {
            let vals = p.condensed_values(der, sigma, delta, DELTA_C);
            self.assembler.fill(&vals, &mut packed);
            let diag = match self.symbolic.factor(&packed) {
                Ok(f) => {
                    let inertia = f.inertia(0.0);
                    if inertia.positive == nx && inertia.negative == ne {
                        return Ok((f, delta));
                    }
                    // pivot spread serves as a cheap condition estimate
                    format!(
                        "inertia {inertia:?}, pivot ratio {:.3e}",
                        f.max_abs_pivot() / f.min_abs_pivot()
                    )
                }
                Err(e) => e.to_string(),
            };
            delta = if delta == 0.0 {
                DELTA_FIRST
            } else {
                delta * 10.0
            };
            if delta > DELTA_MAX {
                return Err(Error::Numerical(format!(
                    "KKT matrix not regularizable with δ ≤ {DELTA_MAX:e}: {diag}"
                )));
            }
        }
    }

    /// Newton direction `(Δy, Δλ, Δμ, Δs)` for the perturbed KKT system.
    fn direction(
        &self,
        y: &[f64],
        dual: &DualState,
        barrier: f64,
    ) -> Result<(Vec<f64>, DualState, f64, Vec<f64>)> {
        let p = &self.problem;
        let (nx, ne, ni) = (p.n_vars(), p.n_eq(), p.n_ineq());
        let der = p.derivatives(y, &dual.lambda);
        let r = p.kkt_residual(&der, y, dual, barrier);
        let (rd, rest) = r.split_at(nx);
        let (rg, rest) = rest.split_at(ne);
        let (rh, rc) = rest.split_at(ni);

        let sigma = p.bound_curvature(dual);
        let (fact, delta) = self.factor(&der, &sigma)?;

        let w: Vec<f64> = (0..ni)
            .map(|j| (-rc[j] + dual.mu[j] * rh[j]) / dual.slacks[j])
            .collect();
        let jtw = p.bounds_t_mul(&w);
        let mut rhs: Vec<f64> = rd.iter().zip(&jtw).map(|(a, b)| -a - b).collect();
        rhs.extend(rg.iter().map(|g| -g));

        let exact = self
            .assembler
            .assemble(&p.condensed_values(&der, &sigma, delta, 0.0));
        let mut sol = rhs.clone();
        fact.solve(&mut sol);
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for _ in 0..REFINE_STEPS {
            let kx = exact.sym_upper_mul_vec(&sol);
            let mut res: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
            if res.iter().all(|v| v.abs() <= 1e-15 * scale) {
                break;
            }
            fact.solve(&mut res);
            for (s, d) in sol.iter_mut().zip(&res) {
                *s += d;
            }
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite Newton direction".into()));
        }

        let dy = sol[..nx].to_vec();
        let dlam = sol[nx..].to_vec();
        let jdy = p.bounds_mul(&dy);
        let ds: Vec<f64> = (0..ni).map(|j| -rh[j] - jdy[j]).collect();
        let dz: Vec<f64> = (0..ni)
            .map(|j| (-rc[j] - dual.mu[j] * ds[j]) / dual.slacks[j])
            .collect();
        Ok((
            dy,
            DualState {
                lambda: dlam,
                mu: dz,
                slacks: ds,
            },
            delta,
            r,
        ))
    }

    /// One damped Newton step at barrier `barrier`.
    pub fn step(
        &self,
        y: &[f64],
        dual: &DualState,
        barrier: f64,
        opts: &SolverOptions,
    ) -> Result<(Vec<f64>, DualState, StepInfo)> {
        let nb = self.problem.layout.nb;
        let (dy, dd, delta, r0) = self.direction(y, dual, barrier)?;

        let mut alpha = opts.alpha_max;
        for (v, dv) in dual
            .slacks
            .iter()
            .zip(&dd.slacks)
            .chain(dual.mu.iter().zip(&dd.mu))
        {
            if *dv < 0.0 {
                alpha = alpha.min(-opts.ftb * v / dv);
            }
        }

        let phi0 = norm2(&r0);
        let mut best: Option<(f64, Vec<f64>, DualState, Vec<f64>)> = None;
        for _ in 0..=MAX_HALVINGS {
            let ty: Vec<f64> = y.iter().zip(&dy).map(|(a, b)| a + alpha * b).collect();
            if ty[..nb].iter().all(|&v| v > 0.0) {
                let td = DualState {
                    lambda: axpy(&dual.lambda, alpha, &dd.lambda),
                    mu: axpy(&dual.mu, alpha, &dd.mu),
                    slacks: axpy(&dual.slacks, alpha, &dd.slacks),
                };
                let r = self.residual(&ty, &td, barrier);
                let phi = norm2(&r);
                if phi.is_finite() {
                    let accept = phi <= (1.0 - 1e-4 * alpha) * phi0;
                    if best.as_ref().is_none_or(|b| phi < norm2(&b.3)) || accept {
                        best = Some((alpha, ty, td, r));
                    }
                    if accept {
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let (alpha, ty, td, r) =
            best.ok_or_else(|| Error::Numerical("no trial point with positive voltages".into()))?;

        let ni = self.problem.n_ineq();
        let comp = r.len() - ni;
        let residual = inf_norm(&r);
        let kkt = r[comp..]
            .iter()
            .fold(inf_norm(&r[..comp]), |m, c| m.max((c + barrier).abs()));
        let sn = step_norm(
            &self.problem.to_state(y).flatten(),
            &self.problem.to_state(&ty).flatten(),
        );
        Ok((
            ty,
            td,
            StepInfo {
                alpha,
                delta,
                step_norm: sn,
                residual,
                kkt,
            },
        ))
    }
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + a * d).collect()
}

fn norm2(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn inf_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn check_inputs(net: &Network, x: &StateVector) -> Result<()> {
    x.check_dims(net)?;
    if !x.is_finite() {
        return Err(Error::NonFinite("state"));
    }
    if x.v.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument(
            "voltage magnitudes must be positive".into(),
        ));
    }
    Ok(())
}

/// One damped Newton update of the primal-dual point `(x, d)` at barrier `mu`.
/// Returns the new point and `‖x' − x‖₂`.
pub fn newton_step(
    net: &Network,
    sc: &Scenario,
    x: &StateVector,
    d: &DualState,
    mu: f64,
    opts: &SolverOptions,
) -> Result<(StateVector, DualState, f64)> {
    opts.validate()?;
    check_inputs(net, x)?;
    if !d.is_finite() {
        return Err(Error::NonFinite("dual state"));
    }
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(
            "barrier must be non-negative".into(),
        ));
    }
    let ws = NewtonWorkspace::new(net, sc)?;
    let p = ws.problem();
    if d.lambda.len() != p.n_eq() || d.mu.len() != p.n_ineq() || d.slacks.len() != p.n_ineq() {
        return Err(Error::Dimension(
            "dual state does not match the network".into(),
        ));
    }
    if d.slacks.iter().chain(&d.mu).any(|&s| s <= 0.0) {
        return Err(Error::InvalidArgument(
            "slacks and inequality multipliers must be positive".into(),
        ));
    }
    let y = p.to_vars(x);
    let (ty, td, info) = ws.step(&y, d, mu, opts)?;
    Ok((p.to_state(&ty), td, info.step_norm))
}

/// Runs the interior-point method from `start` and records every primal
/// iterate. Returns the final state and duals with the trace; a run that
/// exhausts `max_iter` or fails numerically returns its last iterate and
/// reports it through `trace.status`.
pub fn solve_acopf(
    net: &Network,
    sc: &Scenario,
    opts: &SolverOptions,
    start: &StateVector,
) -> Result<(StateVector, DualState, IterationTrace)> {
    opts.validate()?;
    check_inputs(net, start)?;
    let ws = NewtonWorkspace::new(net, sc)?;
    let p = ws.problem();
    let mut y = p.to_vars(start);
    let mut mu = opts.mu0;
    let mut dual = ws.initial_duals(&y, mu);
    let mut trace = IterationTrace::new(start.clone());
    trace.kkt_norms.push(inf_norm(&ws.residual(&y, &dual, 0.0)));

    for _ in 0..opts.max_iter {
        let t0 = Instant::now();
        let (ny, nd, info) = match ws.step(&y, &dual, mu, opts) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("newton step failed: {e}");
                trace.status = SolveStatus::NumericalFailure;
                break;
            }
        };
        y = ny;
        dual = nd;
        trace.wall_times.push(t0.elapsed().as_secs_f64());
        trace.states.push(p.to_state(&y));
        trace.step_norms.push(info.step_norm);
        trace.kkt_norms.push(info.kkt);
        if !info.step_norm.is_finite() {
            trace.status = SolveStatus::NumericalFailure;
            break;
        }
        if info.step_norm <= opts.tol && info.kkt <= 100.0 * opts.tol {
            trace.status = SolveStatus::Converged;
            break;
        }
        if info.residual <= KAPPA * mu {
            mu = (mu * opts.mu_shrink).max(opts.mu_min);
        }
    }
    Ok((p.to_state(&y), dual, trace))
}
