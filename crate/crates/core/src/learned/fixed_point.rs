use std::time::Instant;

use super::MlpParams;
use crate::acopf::StateVector;
use crate::error::{Error, Result};
use crate::grid::{Network, Scenario};
use crate::solver::{check_convergence, step_norm, IterationTrace, SolveStatus};

/// Inference copy of a network with single-precision weights and
/// double-precision arithmetic. Weights are rounded toward zero, so no
/// magnitude grows and the contraction bound of the source carries over.
#[derive(Clone, Debug)]
pub struct CompiledMlp {
    params: MlpParams,
    /// `W1ᵀ` row-major: row `j` holds the hidden weights of input `j`.
    w1t: Vec<f32>,
    w2: Vec<f32>,
}

impl CompiledMlp {
    pub fn new(params: MlpParams) -> Self {
        let w1t = params.w1.t().iter().map(|&v| f32_toward_zero(v)).collect();
        let w2 = params.w2.iter().map(|&v| f32_toward_zero(v)).collect();
        CompiledMlp { params, w1t, w2 }
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    fn w1_column(&self, j: usize) -> &[f32] {
        let h = self.params.dims.hidden;
        &self.w1t[j * h..(j + 1) * h]
    }
}

impl From<MlpParams> for CompiledMlp {
    fn from(p: MlpParams) -> Self {
        CompiledMlp::new(p)
    }
}

fn f32_toward_zero(v: f64) -> f32 {
    let r = v as f32;
    if r.is_infinite() && v.is_finite() {
        f32::MAX.copysign(r)
    } else if r.is_finite() && r != 0.0 && f64::from(r).abs() > v.abs() {
        f32::from_bits(r.to_bits() - 1)
    } else {
        r
    }
}

/// Per-scenario evaluator. Loads are constant over a run, so their part of
/// the hidden pre-activation is folded into the bias once.
#[derive(Clone, Debug)]
pub struct LoadContext<'m> {
    model: &'m CompiledMlp,
    hidden_bias: Vec<f64>,
}

impl<'m> LoadContext<'m> {
    pub fn new(model: &'m CompiledMlp, loads: &[f64]) -> Result<Self> {
        let p = &model.params;
        let n = p.dims.outputs;
        if loads.len() != p.n_load_inputs() {
            return Err(Error::Dimension(format!(
                "expected {} load inputs, got {}",
                p.n_load_inputs(),
                loads.len()
            )));
        }
        if loads.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loads"));
        }
        let mut hidden_bias = p.b1.to_vec();
        for (k, u) in loads.iter().enumerate() {
            let j = n + k;
            let a = ((u - p.norm.in_mean[j]) / p.norm.in_scale[j] + p.input_shift).max(0.0);
            if a != 0.0 {
                axpy(&mut hidden_bias, a, model.w1_column(j));
            }
        }
        Ok(LoadContext { model, hidden_bias })
    }

    /// `F(x)`; agrees with [`super::forward`] to single-precision weight
    /// rounding.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let m = self.model;
        let p = &m.params;
        let hidden = p.dims.hidden;
        let mut h = self.hidden_bias.clone();
        for (j, u) in x.iter().enumerate() {
            let a = ((u - p.norm.in_mean[j]) / p.norm.in_scale[j] + p.input_shift).max(0.0);
            if a != 0.0 {
                axpy(&mut h, a, m.w1_column(j));
            }
        }
        h.iter_mut().for_each(|v| *v = v.tanh());
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot_f32(&m.w2[r * hidden..(r + 1) * hidden], &h) + p.b2[r];
        }
        p.finish_output(out);
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * f64::from(*xi);
    }
}

fn dot_f32(w: &[f32], h: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (wc, hc) = (w.chunks_exact(8), h.chunks_exact(8));
    let tail: f64 = wc
        .remainder()
        .iter()
        .zip(hc.remainder())
        .map(|(a, b)| f64::from(*a) * b)
        .sum();
    for (a, b) in wc.zip(hc) {
        for k in 0..8 {
            acc[k] += f64::from(a[k]) * b[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Iterates of a run on raw flat states, for models not tied to a network.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatTrace {
    pub states: Vec<Vec<f64>>,
    pub step_norms: Vec<f64>,
    pub wall_times: Vec<f64>,
    pub status: SolveStatus,
}

/// Iterates the network from `start` until two successive states are
/// within `tol` (the reference solver's predicate) or `max_iter` is spent.
/// The first iteration's wall time includes folding the loads into the
/// first layer.
pub fn fixed_point_solve_from(
    model: &CompiledMlp,
    loads: &[f64],
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<FlatTrace> {
    let n = model.params.dims.outputs;
    if start.len() != n {
        return Err(Error::Dimension(format!(
            "start has {} entries, model expects {n}",
            start.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("start state"));
    }
    let mut setup = Some(Instant::now());
    let ctx = LoadContext::new(model, loads)?;
    let mut trace = FlatTrace {
        states: vec![start.to_vec()],
        step_norms: Vec::new(),
        wall_times: Vec::new(),
        status: SolveStatus::MaxIter,
    };
    let mut x = start.to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        let t = setup.take().unwrap_or_else(Instant::now);
        ctx.apply(&x, &mut next);
        trace.wall_times.push(t.elapsed().as_secs_f64());
        trace.step_norms.push(step_norm(&x, &next));
        let done = check_convergence(&x, &next, tol);
        std::mem::swap(&mut x, &mut next);
        trace.states.push(x.clone());
        if done {
            trace.status = SolveStatus::Converged;
            break;
        }
    }
    Ok(trace)
}

/// Runs the learned iterator from the clipped flat start of `net` for the
/// loads of `sc`. The trace carries no KKT norms.
pub fn fixed_point_solve(
    model: &CompiledMlp,
    net: &Network,
    sc: &Scenario,
    tol: f64,
    max_iter: usize,
) -> Result<(StateVector, IterationTrace)> {
    let p = &model.params;
    if net.n_state() != p.dims.outputs || 2 * net.n_load() != p.n_load_inputs() {
        return Err(Error::Dimension(
            "model dimensions do not match the network".into(),
        ));
    }
    if !p.case_hash.is_empty() && p.case_hash != net.case_hash() {
        log::warn!("model was built for a different case ({})", p.case_hash);
    }
    sc.check_dims(net)?;
    let start = StateVector::flat_start(net).flatten();
    let run = fixed_point_solve_from(model, &sc.loads_pu(net), &start, tol, max_iter)?;
    let states = run
        .states
        .iter()
        .map(|x| StateVector::from_flat(net, x))
        .collect::<Result<Vec<_>>>()?;
    let x = states.last().expect("start state").clone();
    let trace = IterationTrace {
        states,
        step_norms: run.step_norms,
        kkt_norms: Vec::new(),
        wall_times: run.wall_times,
        status: run.status,
    };
    Ok((x, trace))
}
