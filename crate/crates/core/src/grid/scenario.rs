use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feasibility {
    #[default]
    Unknown,
    Feasible,
    Infeasible,
}

/// One load profile: demand at every load bus, in [`Network::load_buses`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Real demand per load bus (MW).
    pub pd: Vec<f64>,
    /// Reactive demand per load bus (MVAr).
    pub qd: Vec<f64>,
    pub seed: u64,
    pub feasible: Feasibility,
}

impl Scenario {
    pub fn check_dims(&self, net: &Network) -> Result<()> {
        if self.pd.len() != net.n_load() || self.qd.len() != net.n_load() {
            return Err(Error::Dimension(format!(
                "scenario has {}/{} loads, network has {}",
                self.pd.len(),
                self.qd.len(),
                net.n_load()
            )));
        }
        Ok(())
    }

    /// Flat load input `[Pd; Qd]` in per-unit, length `2·N_L`.
    pub fn loads_pu(&self, net: &Network) -> Vec<f64> {
        self.pd
            .iter()
            .chain(&self.qd)
            .map(|d| d / net.base_mva)
            .collect()
    }

    /// Per-bus demand in per-unit, zero at buses without load.
    pub fn bus_demand_pu(&self, net: &Network) -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; net.n_bus()];
        let mut q = vec![0.0; net.n_bus()];
        for (k, &i) in net.load_buses().iter().enumerate() {
            p[i] = self.pd[k] / net.base_mva;
            q[i] = self.qd[k] / net.base_mva;
        }
        (p, q)
    }

    /// Every demand multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Scenario {
        Scenario {
            pd: self.pd.iter().map(|d| d * factor).collect(),
            qd: self.qd.iter().map(|d| d * factor).collect(),
            ..self.clone()
        }
    }
}

/// Draw every load component independently and uniformly from
/// `[base·(1−range), base·(1+range)]`. Deterministic in `seed`.
pub fn perturb_loads(net: &Network, seed: u64, range: f64) -> Result<Scenario> {
    if !(0.0..1.0).contains(&range) {
        return Err(Error::InvalidArgument(format!(
            "load range must lie in [0, 1), got {range}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sc = net.base_scenario();
    if range > 0.0 {
        for (p, q) in sc.pd.iter_mut().zip(sc.qd.iter_mut()) {
            *p *= 1.0 + rng.gen_range(-range..=range);
            *q *= 1.0 + rng.gen_range(-range..=range);
        }
    }
    sc.seed = seed;
    Ok(sc)
}

/// Per-scenario seeds derived from one master seed.
pub fn derive_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Batch manifest written next to the scenario CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub seed: u64,
    pub range: f64,
    pub base_case_hash: String,
    pub files: Vec<String>,
    pub seeds: Vec<u64>,
}

/// Write `bus_id,Pd_MW,Qd_MVAr` rows, bus ids as numbered in the case file.
pub fn write_scenario_csv(net: &Network, sc: &Scenario, path: &Path) -> Result<()> {
    sc.check_dims(net)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["bus_id", "Pd_MW", "Qd_MVAr"])
        .map_err(csv_err)?;
    for (k, &i) in net.load_buses().iter().enumerate() {
        w.write_record([
            net.buses[i].ext_id.to_string(),
            sc.pd[k].to_string(),
            sc.qd[k].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scenario_csv(net: &Network, path: &Path) -> Result<Scenario> {
    let pos: HashMap<usize, usize> = net
        .load_buses()
        .iter()
        .enumerate()
        .map(|(k, &i)| (net.buses[i].ext_id, k))
        .collect();
    let mut pd = vec![f64::NAN; net.n_load()];
    let mut qd = vec![f64::NAN; net.n_load()];
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["bus_id", "Pd_MW", "Qd_MVAr"] {
        return Err(Error::Format(format!(
            "{}: unexpected header {:?}",
            path.display(),
            headers
        )));
    }
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| Error::Format(format!("{}: short row", path.display())))
        };
        let bus: usize = field(0)?
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad bus id `{}`", &rec[0])))?;
        let k = *pos
            .get(&bus)
            .ok_or_else(|| Error::Format(format!("bus {bus} is not a load bus of this network")))?;
        pd[k] = parse_f64(field(1)?)?;
        qd[k] = parse_f64(field(2)?)?;
    }
    if pd.iter().chain(&qd).any(|v| v.is_nan()) {
        return Err(Error::Format(format!(
            "{}: some load buses are missing",
            path.display()
        )));
    }
    Ok(Scenario {
        pd,
        qd,
        seed: 0,
        feasible: super::Feasibility::Unknown,
    })
}

/// Generate `count` scenarios and write them as `scenario_NNNN.csv` plus
/// `manifest.json` into `dir`.
pub fn write_scenario_batch(
    net: &Network,
    dir: &Path,
    count: usize,
    seed: u64,
    range: f64,
) -> Result<Vec<Scenario>> {
    fs::create_dir_all(dir)?;
    let seeds = derive_seeds(seed, count);
    let mut files = Vec::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for (i, &s) in seeds.iter().enumerate() {
        let sc = perturb_loads(net, s, range)?;
        let file = format!("scenario_{i:04}.csv");
        write_scenario_csv(net, &sc, &dir.join(&file))?;
        files.push(file);
        out.push(sc);
    }
    let manifest = ScenarioManifest {
        seed,
        range,
        base_case_hash: net.case_hash().to_string(),
        files,
        seeds,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(out)
}

/// Load every scenario listed in `dir/manifest.json`, in manifest order.
pub fn read_scenario_batch(net: &Network, dir: &Path) -> Result<Vec<Scenario>> {
    let manifest: ScenarioManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.base_case_hash != net.case_hash() {
        log::warn!(
            "scenario batch {} was generated for a different case",
            dir.display()
        );
    }
    manifest
        .files
        .iter()
        .zip(&manifest.seeds)
        .map(|(f, &s)| {
            let mut sc = read_scenario_csv(net, &PathBuf::from(dir).join(f))?;
            sc.seed = s;
            Ok(sc)
        })
        .collect()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad number `{s}`")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
