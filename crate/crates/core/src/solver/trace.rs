use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::acopf::StateVector;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    NumericalFailure,
}

/// Primal iterates of one solve.
///
/// `states[0]` is the starting point; `step_norms[k]` and `wall_times[k]`
/// describe the move from `states[k]` to `states[k + 1]`. `kkt_norms` holds
/// the exact KKT residual (∞-norm) at each state and is empty for the
/// learned iterator, which never forms the KKT system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub states: Vec<StateVector>,
    pub step_norms: Vec<f64>,
    pub kkt_norms: Vec<f64>,
    /// Seconds per iteration.
    pub wall_times: Vec<f64>,
    pub status: SolveStatus,
}

impl IterationTrace {
    pub fn new(start: StateVector) -> Self {
        IterationTrace {
            states: vec![start],
            step_norms: Vec::new(),
            kkt_norms: Vec::new(),
            wall_times: Vec::new(),
            status: SolveStatus::MaxIter,
        }
    }

    pub fn iterations(&self) -> usize {
        self.step_norms.len()
    }

    pub fn total_time(&self) -> f64 {
        self.wall_times.iter().sum()
    }

    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trace holds the start state")
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// One JSON-lines record; `x` is flattened as `[v, θ, Pg, Qg]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub step_norm: Option<f64>,
    pub kkt_norm: Option<f64>,
    pub wall_ms: f64,
}

pub fn write_trace_jsonl<W: Write>(trace: &IterationTrace, mut out: W) -> Result<()> {
    for (k, x) in trace.states.iter().enumerate() {
        let rec = TraceRecord {
            k,
            x: x.flatten(),
            step_norm: k.checked_sub(1).map(|i| trace.step_norms[i]),
            kkt_norm: trace.kkt_norms.get(k).copied(),
            wall_ms: k.checked_sub(1).map_or(0.0, |i| trace.wall_times[i] * 1e3),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace_jsonl<R: BufRead>(input: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
