//! Grid description: buses, branches, generators, and load scenarios.
//!
//! All electrical quantities are stored as they appear in the case file
//! (MW, MVAr, per-unit impedances). Conversion to per-unit power happens at
//! the point of use, dividing by [`Network::base_mva`].

mod admittance;
mod case;
mod scenario;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use admittance::{build_admittance, AdmittanceMatrix};
pub use case::{parse_case, tile_network, write_case};
pub use scenario::{
    derive_seeds, perturb_loads, read_scenario_batch, read_scenario_csv, write_scenario_batch,
    write_scenario_csv, Feasibility, Scenario, ScenarioManifest,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// Dense internal index.
    pub id: usize,
    /// Bus number as written in the case file.
    pub ext_id: usize,
    pub kind: BusType,
    /// Shunt conductance, MW consumed at 1.0 pu voltage.
    pub gs: f64,
    /// Shunt susceptance, MVAr injected at 1.0 pu voltage.
    pub bs: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Base real demand (MW).
    pub pd: f64,
    /// Base reactive demand (MVAr).
    pub qd: f64,
}

impl Bus {
    pub fn has_load(&self) -> bool {
        self.pd != 0.0 || self.qd != 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance (pu).
    pub b: f64,
    /// Off-nominal turns ratio on the from side; 1.0 for plain lines.
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    pub in_service: bool,
}

/// Quadratic generation cost, coefficients in $/MW²h, $/MWh and $/h.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostCurve {
    pub fn eval(&self, p_mw: f64) -> f64 {
        (self.c2 * p_mw + self.c1) * p_mw + self.c0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: CostCurve,
    pub in_service: bool,
}

/// Immutable grid description.
///
/// Construct through [`Network::new`] (or [`parse_case`]) so that the
/// derived indices and the validation invariants always hold.
#[derive(Clone, Debug)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    slack: usize,
    online_gens: Vec<usize>,
    load_buses: Vec<usize>,
    case_hash: String,
}

#[derive(Serialize)]
struct HashView<'a> {
    base_mva: f64,
    buses: &'a [Bus],
    branches: &'a [Branch],
    generators: &'a [Generator],
}

impl Network {
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(Error::Validation(format!(
                "base MVA must be positive, got {base_mva}"
            )));
        }
        if buses.is_empty() {
            return Err(Error::Validation("network has no buses".into()));
        }
        for (i, bus) in buses.iter().enumerate() {
            if bus.id != i {
                return Err(Error::Validation(format!(
                    "bus ids must be dense, found {} at {i}",
                    bus.id
                )));
            }
            if !(bus.v_min < bus.v_max) || bus.v_min <= 0.0 {
                return Err(Error::Validation(format!(
                    "bus {}: voltage bounds [{}, {}] are invalid",
                    bus.ext_id, bus.v_min, bus.v_max
                )));
            }
            let vals = [bus.gs, bus.bs, bus.pd, bus.qd, bus.v_min, bus.v_max];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("bus data"));
            }
        }
        let slacks: Vec<usize> = buses
            .iter()
            .filter(|b| b.kind == BusType::Slack)
            .map(|b| b.id)
            .collect();
        let slack = match slacks.as_slice() {
            [s] => *s,
            [] => return Err(Error::Validation("no slack bus".into())),
            _ => {
                return Err(Error::Validation(format!(
                    "{} slack buses, expected one",
                    slacks.len()
                )))
            }
        };
        let nb = buses.len();
        for (k, br) in branches.iter().enumerate() {
            if br.from >= nb || br.to >= nb {
                return Err(Error::Validation(format!(
                    "branch {k} references an unknown bus"
                )));
            }
            if br.from == br.to {
                return Err(Error::Validation(format!("branch {k} is a self-loop")));
            }
            if br.in_service && br.r * br.r + br.x * br.x == 0.0 {
                return Err(Error::Validation(format!("branch {k} has zero impedance")));
            }
            if !(br.tap.is_finite() && br.tap > 0.0) {
                return Err(Error::Validation(format!(
                    "branch {k} has invalid tap {}",
                    br.tap
                )));
            }
        }
        for (k, g) in generators.iter().enumerate() {
            if g.bus >= nb {
                return Err(Error::Validation(format!(
                    "generator {k} references an unknown bus"
                )));
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(Error::Validation(format!(
                    "generator {k} has inverted output bounds"
                )));
            }
            let c = g.cost;
            if ![c.c2, c.c1, c.c0, g.p_min, g.p_max, g.q_min, g.q_max]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(Error::NonFinite("generator data"));
            }
        }
        let online_gens: Vec<usize> = (0..generators.len())
            .filter(|&g| generators[g].in_service)
            .collect();
        if online_gens.is_empty() {
            return Err(Error::Validation("no in-service generator".into()));
        }
        let load_buses = buses
            .iter()
            .filter(|b| b.has_load())
            .map(|b| b.id)
            .collect();

        let case_hash = {
            let view = HashView {
                base_mva,
                buses: &buses,
                branches: &branches,
                generators: &generators,
            };
            let bytes = serde_json::to_vec(&view)?;
            hex_digest(&bytes)
        };

        let net = Network {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators,
            slack,
            online_gens,
            load_buses,
            case_hash,
        };
        net.check_connected()?;
        Ok(net)
    }

    fn check_connected(&self) -> Result<()> {
        let nb = self.n_bus();
        let mut adj = vec![Vec::new(); nb];
        for br in self.branches.iter().filter(|b| b.in_service) {
            adj[br.from].push(br.to);
            adj[br.to].push(br.from);
        }
        let mut seen = vec![false; nb];
        let mut queue = VecDeque::from([self.slack]);
        seen[self.slack] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Validation(format!(
                "network is disconnected: bus {} unreachable from the slack bus",
                self.buses[i].ext_id
            ))),
            None => Ok(()),
        }
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Number of in-service generators.
    pub fn n_gen(&self) -> usize {
        self.online_gens.len()
    }

    /// Number of buses with nonzero base demand.
    pub fn n_load(&self) -> usize {
        self.load_buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.branches.iter().filter(|b| b.in_service).count()
    }

    /// Dimension of the state vector `[v, θ, Pg, Qg]`.
    pub fn n_state(&self) -> usize {
        2 * self.n_bus() + 2 * self.n_gen()
    }

    pub fn slack_bus(&self) -> usize {
        self.slack
    }

    /// Indices into `generators` of in-service units, in state-vector order.
    pub fn online_gens(&self) -> &[usize] {
        &self.online_gens
    }

    pub fn online_gen(&self, k: usize) -> &Generator {
        &self.generators[self.online_gens[k]]
    }

    pub fn load_buses(&self) -> &[usize] {
        &self.load_buses
    }

    /// Total real generation capacity of in-service units (MW).
    pub fn total_p_max(&self) -> f64 {
        self.online_gens
            .iter()
            .map(|&g| self.generators[g].p_max)
            .sum()
    }

    /// Hex SHA-256 of the network data; ties datasets and models to a case.
    pub fn case_hash(&self) -> &str {
        &self.case_hash
    }

    /// Position (in state order) of the first in-service generator at the slack bus.
    pub fn slack_gen(&self) -> Option<usize> {
        (0..self.n_gen()).find(|&k| self.online_gen(k).bus == self.slack)
    }

    pub fn base_scenario(&self) -> Scenario {
        Scenario {
            pd: self.load_buses.iter().map(|&i| self.buses[i].pd).collect(),
            qd: self.load_buses.iter().map(|&i| self.buses[i].qd).collect(),
            seed: 0,
            feasible: Feasibility::Unknown,
        }
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
