use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Network;

/// Candidate OPF solution `[v, θ, Pg, Qg]`, all per-unit, angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

impl StateVector {
    /// `v = Pg = Qg = 1`, `θ = 0`, then clipped into the variable bounds.
    pub fn flat_start(net: &Network) -> Self {
        let ng = net.n_gen();
        let mut x = StateVector {
            v: vec![1.0; net.n_bus()],
            theta: vec![0.0; net.n_bus()],
            pg: vec![1.0; ng],
            qg: vec![1.0; ng],
        };
        x.clip_to_bounds(net);
        x
    }

    pub fn clip_to_bounds(&mut self, net: &Network) {
        let base = net.base_mva;
        for (v, b) in self.v.iter_mut().zip(&net.buses) {
            *v = v.clamp(b.v_min, b.v_max);
        }
        for k in 0..net.n_gen() {
            let g = net.online_gen(k);
            self.pg[k] = self.pg[k].clamp(g.p_min / base, g.p_max / base);
            self.qg[k] = self.qg[k].clamp(g.q_min / base, g.q_max / base);
        }
    }

    /// Flat array in the fixed order `[v, θ, Pg, Qg]`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.theta);
        out.extend_from_slice(&self.pg);
        out.extend_from_slice(&self.qg);
        out
    }

    pub fn from_flat(net: &Network, flat: &[f64]) -> Result<Self> {
        let (nb, ng) = (net.n_bus(), net.n_gen());
        if flat.len() != 2 * nb + 2 * ng {
            return Err(Error::Dimension(format!(
                "state of length {} for n = {}",
                flat.len(),
                2 * nb + 2 * ng
            )));
        }
        Ok(StateVector {
            v: flat[..nb].to_vec(),
            theta: flat[nb..2 * nb].to_vec(),
            pg: flat[2 * nb..2 * nb + ng].to_vec(),
            qg: flat[2 * nb + ng..].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.v.len() + self.theta.len() + self.pg.len() + self.qg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_dims(&self, net: &Network) -> Result<()> {
        let (nb, ng) = (net.n_bus(), net.n_gen());
        if self.v.len() != nb
            || self.theta.len() != nb
            || self.pg.len() != ng
            || self.qg.len() != ng
        {
            return Err(Error::Dimension(format!(
                "state lengths ({}, {}, {}, {}) do not match network ({nb}, {nb}, {ng}, {ng})",
                self.v.len(),
                self.theta.len(),
                self.pg.len(),
                self.qg.len()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.v
            .iter()
            .chain(&self.theta)
            .chain(&self.pg)
            .chain(&self.qg)
            .all(|x| x.is_finite())
    }

    /// Per-variable `[lo, hi]` boxes in flat order. Angles get `[-π, π]`.
    pub fn bounds(net: &Network) -> (Vec<f64>, Vec<f64>) {
        let base = net.base_mva;
        let pi = std::f64::consts::PI;
        let mut lo = Vec::with_capacity(net.n_state());
        let mut hi = Vec::with_capacity(net.n_state());
        lo.extend(net.buses.iter().map(|b| b.v_min));
        hi.extend(net.buses.iter().map(|b| b.v_max));
        lo.extend(std::iter::repeat(-pi).take(net.n_bus()));
        hi.extend(std::iter::repeat(pi).take(net.n_bus()));
        let gens: Vec<_> = (0..net.n_gen()).map(|k| net.online_gen(k)).collect();
        lo.extend(gens.iter().map(|g| g.p_min / base));
        hi.extend(gens.iter().map(|g| g.p_max / base));
        lo.extend(gens.iter().map(|g| g.q_min / base));
        hi.extend(gens.iter().map(|g| g.q_max / base));
        (lo, hi)
    }
}

/// Multipliers and slacks of the interior-point iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// Power-balance multipliers, `[P rows; Q rows]`.
    pub lambda: Vec<f64>,
    /// Inequality multipliers, nonnegative.
    pub mu: Vec<f64>,
    /// Inequality slacks, positive while iterating.
    pub slacks: Vec<f64>,
}

impl DualState {
    pub fn zeros(n_eq: usize, n_ineq: usize) -> Self {
        DualState {
            lambda: vec![0.0; n_eq],
            mu: vec![0.0; n_ineq],
            slacks: vec![0.0; n_ineq],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lambda
            .iter()
            .chain(&self.mu)
            .chain(&self.slacks)
            .all(|x| x.is_finite())
    }
}

/// Constraint residuals and objective at one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Power mismatch, `2·N_B` entries (pu).
    pub equality: Vec<f64>,
    /// `max(0, h_j(x))` (pu).
    pub inequality: Vec<f64>,
    /// Generation cost ($/h).
    pub objective: f64,
}

/// Positions of the optimization unknowns. The slack-bus angle is pinned to
/// zero and has no slot.
#[derive(Clone, Debug)]
pub struct VarLayout {
    pub nb: usize,
    pub ng: usize,
    pub slack: usize,
}

impl VarLayout {
    pub fn new(net: &Network) -> Self {
        VarLayout {
            nb: net.n_bus(),
            ng: net.n_gen(),
            slack: net.slack_bus(),
        }
    }

    pub fn n_vars(&self) -> usize {
        2 * self.nb - 1 + 2 * self.ng
    }

    pub fn v(&self, i: usize) -> usize {
        i
    }

    pub fn theta(&self, i: usize) -> Option<usize> {
        match i.cmp(&self.slack) {
            std::cmp::Ordering::Less => Some(self.nb + i),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(self.nb + i - 1),
        }
    }

    pub fn pg(&self, k: usize) -> usize {
        2 * self.nb - 1 + k
    }

    pub fn qg(&self, k: usize) -> usize {
        2 * self.nb - 1 + self.ng + k
    }

    /// Angles are referenced to the slack bus before dropping its slot.
    pub fn to_vars(&self, x: &StateVector) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.n_vars());
        y.extend_from_slice(&x.v);
        let t0 = x.theta[self.slack];
        y.extend(
            x.theta
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != self.slack)
                .map(|(_, t)| t - t0),
        );
        y.extend_from_slice(&x.pg);
        y.extend_from_slice(&x.qg);
        y
    }

    pub fn to_state(&self, y: &[f64]) -> StateVector {
        let nb = self.nb;
        let theta = (0..nb)
            .map(|i| self.theta(i).map_or(0.0, |k| y[k]))
            .collect();
        StateVector {
            v: y[..nb].to_vec(),
            theta,
            pg: y[self.pg(0)..self.pg(0) + self.ng].to_vec(),
            qg: y[self.qg(0)..self.qg(0) + self.ng].to_vec(),
        }
    }
}
