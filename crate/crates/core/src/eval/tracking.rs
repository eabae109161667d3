use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::csv_err;
use super::Backend;
use crate::acopf::{cost, StateVector};
use crate::error::{Error, Result};
use crate::grid::{Network, Scenario};

/// Bounded random walk of every load component around its base value:
/// each tick the multiplier moves by a uniform draw in `±step` and is
/// clipped to `1 ± envelope`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadWalk {
    pub step: f64,
    pub envelope: f64,
    pub seed: u64,
}

impl Default for LoadWalk {
    fn default() -> Self {
        LoadWalk {
            step: 0.02,
            envelope: 0.4,
            seed: 0,
        }
    }
}

impl LoadWalk {
    /// Scenarios for ticks `0..ticks`; tick 0 is the base profile.
    pub fn scenarios(&self, base: &Scenario, ticks: usize) -> Result<Vec<Scenario>> {
        if !(self.step >= 0.0) || !(0.0..1.0).contains(&self.envelope) {
            return Err(Error::InvalidArgument(
                "load walk needs step ≥ 0 and envelope in [0, 1)".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut m = vec![1.0; base.pd.len() + base.qd.len()];
        let mut out = Vec::with_capacity(ticks);
        for t in 0..ticks {
            if t > 0 && self.step > 0.0 {
                for v in m.iter_mut() {
                    *v = (*v + rng.gen_range(-self.step..=self.step))
                        .clamp(1.0 - self.envelope, 1.0 + self.envelope);
                }
            }
            let (mp, mq) = m.split_at(base.pd.len());
            out.push(Scenario {
                pd: base.pd.iter().zip(mp).map(|(d, f)| d * f).collect(),
                qd: base.qd.iter().zip(mq).map(|(d, f)| d * f).collect(),
                seed: t as u64,
                ..base.clone()
            });
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingConfig {
    pub ticks: usize,
    pub period_s: f64,
    pub walk: LoadWalk,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig {
            ticks: 30,
            period_s: 1.0,
            walk: LoadWalk::default(),
        }
    }
}

/// What one backend had published at the end of a tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Published {
    pub backend: String,
    /// Tick whose loads produced the published setpoint; `None` before the
    /// first solve finishes.
    pub source_tick: Option<usize>,
    pub stale: bool,
    /// $/h; NaN while nothing is published.
    pub cost: f64,
    /// Real output of the slack-bus generator, MW; NaN while nothing is published.
    pub slack_mw: f64,
    /// Compute plus injected delay of the solve started at this tick, if any.
    pub solve_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    pub time_s: f64,
    /// Total real demand over its base value.
    pub load_factor: f64,
    /// Optimum for this tick's loads, solved afterwards without delay.
    pub true_cost: f64,
    pub true_slack_mw: f64,
    pub published: Vec<Published>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub ticks: Vec<TickRecord>,
}

impl TrackingReport {
    /// Fraction of ticks on which `backend` published a stale setpoint.
    pub fn stale_fraction(&self, backend: &str) -> f64 {
        let flags: Vec<bool> = self
            .ticks
            .iter()
            .flat_map(|t| {
                t.published
                    .iter()
                    .filter(|p| p.backend == backend)
                    .map(|p| p.stale)
            })
            .collect();
        flags.iter().filter(|s| **s).count() as f64 / flags.len().max(1) as f64
    }
}

struct Job {
    finish: f64,
    tick: usize,
    x: StateVector,
}

/// Real-time operation on a virtual clock. New loads arrive at the start
/// of every tick; an idle backend starts solving them at once, a busy one
/// finishes its current solve first. A solve occupies the backend for its
/// measured compute time plus its injected delay, and a setpoint is fresh
/// only if it was computed from the current tick's loads.
///
/// Each backend is given as `(backend, injected delay in seconds)`;
/// `oracle` supplies the true optima.
pub fn tracking_sim(
    backends: &[(&dyn Backend, f64)],
    oracle: &dyn Backend,
    net: &Network,
    base: &Scenario,
    cfg: &TrackingConfig,
) -> Result<TrackingReport> {
    if !(cfg.period_s > 0.0) || cfg.ticks == 0 {
        return Err(Error::InvalidArgument(
            "tracking needs a positive period and at least one tick".into(),
        ));
    }
    let scenarios = cfg.walk.scenarios(base, cfg.ticks)?;
    let base_total: f64 = base.pd.iter().sum();
    let slack = |x: &StateVector| net.slack_gen().map_or(f64::NAN, |k| x.pg[k] * net.base_mva);

    let mut ticks: Vec<TickRecord> = scenarios
        .iter()
        .enumerate()
        .map(|(t, sc)| TickRecord {
            tick: t,
            time_s: t as f64 * cfg.period_s,
            load_factor: if base_total != 0.0 {
                sc.pd.iter().sum::<f64>() / base_total
            } else {
                1.0
            },
            true_cost: f64::NAN,
            true_slack_mw: f64::NAN,
            published: Vec::new(),
        })
        .collect();

    for &(backend, delay) in backends {
        if !(delay >= 0.0) {
            return Err(Error::InvalidArgument(
                "injected delay must be non-negative".into(),
            ));
        }
        let mut published: Option<(usize, StateVector)> = None;
        let mut job: Option<Job> = None;
        for (t, sc) in scenarios.iter().enumerate() {
            let start = t as f64 * cfg.period_s;
            let mut solve_s = None;
            if job.is_none() {
                let clock = Instant::now();
                let (x, _) = backend.solve(net, sc)?;
                let busy = clock.elapsed().as_secs_f64() + delay;
                solve_s = Some(busy);
                job = Some(Job {
                    finish: start + busy,
                    tick: t,
                    x,
                });
            }
            let end = start + cfg.period_s;
            if job.as_ref().is_some_and(|j| j.finish <= end) {
                let j = job.take().expect("checked above");
                published = Some((j.tick, j.x));
            }
            let (source_tick, c, s) = match &published {
                Some((k, x)) => (Some(*k), cost(net, x), slack(x)),
                None => (None, f64::NAN, f64::NAN),
            };
            ticks[t].published.push(Published {
                backend: backend.name().to_string(),
                source_tick,
                stale: source_tick != Some(t),
                cost: c,
                slack_mw: s,
                solve_s,
            });
        }
    }

    for (rec, sc) in ticks.iter_mut().zip(&scenarios) {
        let (x, _) = oracle.solve(net, sc)?;
        rec.true_cost = cost(net, &x);
        rec.true_slack_mw = slack(&x);
    }
    Ok(TrackingReport { ticks })
}

/// One row per (tick, backend).
pub fn write_tracking_csv(report: &TrackingReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "tick",
        "time_s",
        "load_factor",
        "true_cost",
        "true_slack_mw",
        "backend",
        "source_tick",
        "stale",
        "published_cost",
        "published_slack_mw",
        "solve_s",
    ])
    .map_err(csv_err)?;
    for t in &report.ticks {
        for p in &t.published {
            w.write_record([
                t.tick.to_string(),
                t.time_s.to_string(),
                t.load_factor.to_string(),
                t.true_cost.to_string(),
                t.true_slack_mw.to_string(),
                p.backend.clone(),
                p.source_tick.map_or(String::new(), |k| k.to_string()),
                p.stale.to_string(),
                p.cost.to_string(),
                p.slack_mw.to_string(),
                p.solve_s.map_or(String::new(), |s| s.to_string()),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
