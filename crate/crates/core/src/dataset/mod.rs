//! Training data harvested from reference-solver trajectories.
//!
//! Every feasible scenario contributes the consecutive primal iterates of
//! its solve as `(x_k, x_{k+1}, loads)` pairs, including the final pair that
//! lands on the converged point.

mod io;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acopf::StateVector;
use crate::error::{Error, Result};
use crate::grid::{derive_seeds, perturb_loads, Network};
use crate::solver::{solve_acopf, SolveStatus, SolverOptions};

pub use io::{export_csv, read_dataset, write_dataset, PAIRS_MAGIC, PAIRS_VERSION};

/// Floor applied to per-feature scales.
pub const SCALE_FLOOR: f64 = 1e-6;

/// One training sample, all quantities per-unit.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationPair {
    pub x_k: Vec<f64>,
    pub x_next: Vec<f64>,
    pub loads: Vec<f64>,
    pub scenario_id: usize,
    pub k: usize,
}

/// Outcome of one scenario solve. Pairs of a dataset are stored scenario by
/// scenario in the order of this list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub id: usize,
    pub seed: u64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub pairs: usize,
}

impl ScenarioRecord {
    pub fn feasible(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub case_name: String,
    pub case_hash: String,
    pub seed: u64,
    pub range: f64,
    pub gen_tol: f64,
    pub max_iter: usize,
    pub n_scenarios: usize,
    pub n_feasible: usize,
    pub n_pairs: usize,
    /// State dimension `n`.
    pub n_state: usize,
    /// Number of load buses `N_L`; load vectors have length `2·N_L`.
    pub n_loads: usize,
    pub generator: String,
    pub scenarios: Vec<ScenarioRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_scenarios: usize,
    pub seed: u64,
    pub range: f64,
    pub solver: SolverOptions,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_scenarios: 1000,
            seed: 0,
            range: 0.4,
            solver: SolverOptions::with_tol(SolverOptions::DATA_TOL),
        }
    }
}

/// Pairs stored row-major as `[x_k | x_next | loads]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    rows: Vec<f64>,
    scenario_ids: Vec<usize>,
    steps: Vec<usize>,
}

impl Dataset {
    fn from_parts(manifest: DatasetManifest, rows: Vec<f64>) -> Result<Self> {
        let width = 2 * manifest.n_state + 2 * manifest.n_loads;
        let n_pairs: usize = manifest.scenarios.iter().map(|s| s.pairs).sum();
        if n_pairs != manifest.n_pairs || rows.len() != n_pairs * width {
            return Err(Error::Format(format!(
                "manifest lists {} pairs ({} by scenario), data holds {} values of width {width}",
                manifest.n_pairs,
                n_pairs,
                rows.len()
            )));
        }
        let mut scenario_ids = Vec::with_capacity(n_pairs);
        let mut steps = Vec::with_capacity(n_pairs);
        for s in &manifest.scenarios {
            scenario_ids.extend(std::iter::repeat(s.id).take(s.pairs));
            steps.extend(0..s.pairs);
        }
        Ok(Dataset {
            manifest,
            rows,
            scenario_ids,
            steps,
        })
    }

    pub fn len(&self) -> usize {
        self.scenario_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_state(&self) -> usize {
        self.manifest.n_state
    }

    pub fn n_inputs(&self) -> usize {
        self.manifest.n_state + 2 * self.manifest.n_loads
    }

    fn width(&self) -> usize {
        2 * self.manifest.n_state + 2 * self.manifest.n_loads
    }

    fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.rows[i * w..(i + 1) * w]
    }

    pub fn x_k(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.n_state()]
    }

    pub fn x_next(&self, i: usize) -> &[f64] {
        let n = self.n_state();
        &self.row(i)[n..2 * n]
    }

    pub fn loads(&self, i: usize) -> &[f64] {
        &self.row(i)[2 * self.n_state()..]
    }

    /// Network input `[x_k | loads]` of pair `i`.
    pub fn input(&self, i: usize) -> Vec<f64> {
        let mut v = self.x_k(i).to_vec();
        v.extend_from_slice(self.loads(i));
        v
    }

    pub fn scenario_id(&self, i: usize) -> usize {
        self.scenario_ids[i]
    }

    pub fn pair(&self, i: usize) -> IterationPair {
        IterationPair {
            x_k: self.x_k(i).to_vec(),
            x_next: self.x_next(i).to_vec(),
            loads: self.loads(i).to_vec(),
            scenario_id: self.scenario_ids[i],
            k: self.steps[i],
        }
    }

    pub fn raw_rows(&self) -> &[f64] {
        &self.rows
    }

    /// Subset holding the listed scenarios, in the order given.
    pub fn select(&self, ids: &[usize]) -> Result<Dataset> {
        let w = self.width();
        let mut offsets = std::collections::HashMap::new();
        let mut start = 0;
        for s in &self.manifest.scenarios {
            offsets.insert(s.id, (start, s));
            start += s.pairs;
        }
        let mut rows = Vec::new();
        let mut records = Vec::with_capacity(ids.len());
        for id in ids {
            let &(off, rec) = offsets
                .get(id)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario id {id}")))?;
            rows.extend_from_slice(&self.rows[off * w..(off + rec.pairs) * w]);
            records.push(rec.clone());
        }
        let manifest = DatasetManifest {
            n_scenarios: records.len(),
            n_feasible: records.iter().filter(|r| r.feasible()).count(),
            n_pairs: records.iter().map(|r| r.pairs).sum(),
            scenarios: records,
            ..self.manifest.clone()
        };
        Dataset::from_parts(manifest, rows)
    }
}

/// Solves `cfg.n_scenarios` perturbed scenarios and harvests the trajectory
/// pairs of those that converge. Solves run on the rayon pool; output order
/// follows the scenario index.
pub fn generate_dataset(net: &Network, cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.n_scenarios == 0 {
        return Err(Error::InvalidArgument(
            "n_scenarios must be at least 1".into(),
        ));
    }
    cfg.solver.validate()?;
    let seeds = derive_seeds(cfg.seed, cfg.n_scenarios);
    let start = StateVector::flat_start(net);
    let solved: Vec<Result<(ScenarioRecord, Vec<f64>)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(id, &seed)| {
            let sc = perturb_loads(net, seed, cfg.range)?;
            let loads = sc.loads_pu(net);
            let (_, _, trace) = solve_acopf(net, &sc, &cfg.solver, &start)?;
            let mut rows = Vec::new();
            if trace.converged() {
                for w in trace.states.windows(2) {
                    rows.extend(w[0].flatten());
                    rows.extend(w[1].flatten());
                    rows.extend_from_slice(&loads);
                }
            } else {
                log::info!("scenario {id} (seed {seed}) excluded: {:?}", trace.status);
            }
            let pairs = if trace.converged() {
                trace.iterations()
            } else {
                0
            };
            Ok((
                ScenarioRecord {
                    id,
                    seed,
                    status: trace.status,
                    iterations: trace.iterations(),
                    pairs,
                },
                rows,
            ))
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.n_scenarios);
    let mut rows = Vec::new();
    for r in solved {
        let (rec, r) = r?;
        rows.extend(r);
        records.push(rec);
    }
    let manifest = DatasetManifest {
        case_name: net.name.clone(),
        case_hash: net.case_hash().to_string(),
        seed: cfg.seed,
        range: cfg.range,
        gen_tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        n_scenarios: cfg.n_scenarios,
        n_feasible: records.iter().filter(|r| r.feasible()).count(),
        n_pairs: records.iter().map(|r| r.pairs).sum(),
        n_state: net.n_state(),
        n_loads: net.n_load(),
        generator: format!("gridnewton {}", env!("CARGO_PKG_VERSION")),
        scenarios: records,
    };
    Dataset::from_parts(manifest, rows)
}

/// Partition by scenario: a shuffled `fraction` of the scenarios goes to the
/// first set, the rest to the second. Both sides keep at least one scenario.
pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut ids: Vec<usize> = data.manifest.scenarios.iter().map(|s| s.id).collect();
    if ids.len() < 2 {
        return Err(Error::InvalidArgument(
            "at least two scenarios are needed to split".into(),
        ));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_first = ((fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let (a, b) = ids.split_at(n_first);
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_unstable();
    b.sort_unstable();
    Ok((data.select(&a)?, data.select(&b)?))
}

/// Per-feature affine normalization `z = (v − mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// Network input features `[x_k | loads]`.
    pub in_mean: Vec<f64>,
    pub in_scale: Vec<f64>,
    /// Output features `x_next`.
    pub out_mean: Vec<f64>,
    pub out_scale: Vec<f64>,
}

impl NormStats {
    /// Identity transform for `n_in` inputs and `n_out` outputs.
    pub fn identity(n_in: usize, n_out: usize) -> Self {
        NormStats {
            in_mean: vec![0.0; n_in],
            in_scale: vec![1.0; n_in],
            out_mean: vec![0.0; n_out],
            out_scale: vec![1.0; n_out],
        }
    }
}

fn mean_scale(n: usize, m: usize, get: impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; n];
    for i in 0..m {
        for (j, mj) in mean.iter_mut().enumerate() {
            *mj += get(i, j);
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut var = vec![0.0; n];
    for i in 0..m {
        for (j, vj) in var.iter_mut().enumerate() {
            let d = get(i, j) - mean[j];
            *vj += d * d;
        }
    }
    let scale = var
        .iter()
        .map(|v| (v / m as f64).sqrt().max(SCALE_FLOOR))
        .collect();
    (mean, scale)
}

/// Mean and population standard deviation of every input and output feature
/// over `train`, with scales floored at [`SCALE_FLOOR`].
pub fn normalize_stats(train: &Dataset) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot normalize an empty dataset".into(),
        ));
    }
    let n = train.n_state();
    let (in_mean, in_scale) = mean_scale(train.n_inputs(), train.len(), |i, j| {
        if j < n {
            train.x_k(i)[j]
        } else {
            train.loads(i)[j - n]
        }
    });
    let (out_mean, out_scale) = mean_scale(n, train.len(), |i, j| train.x_next(i)[j]);
    Ok(NormStats {
        in_mean,
        in_scale,
        out_mean,
        out_scale,
    })
}
