use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::csv_err;
use super::Backend;
use crate::error::{Error, Result};
use crate::grid::{Network, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Timed solves per scenario and backend.
    pub repeats: usize,
    /// Untimed solves per scenario and backend before the timed ones.
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            repeats: 3,
            warmup: 1,
        }
    }
}

/// Wall-clock statistics of full solves (flat start to convergence) of one
/// backend. Runs that did not converge are excluded and counted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendTiming {
    pub name: String,
    pub n_runs: usize,
    pub n_failed: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub max_s: f64,
    /// Population variance, s².
    pub var_s: f64,
    pub iterations: usize,
    /// Total solve time over total iterations.
    pub per_iter_mean_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub reference: BackendTiming,
    pub candidate: BackendTiming,
    /// `reference.mean_s / candidate.mean_s`.
    pub speedup: f64,
    pub per_iter_speedup: f64,
}

struct Runs {
    times: Vec<f64>,
    iterations: usize,
    failed: usize,
}

impl Runs {
    fn new() -> Self {
        Runs {
            times: Vec::new(),
            iterations: 0,
            failed: 0,
        }
    }

    fn run(&mut self, b: &dyn Backend, net: &Network, sc: &Scenario, timed: bool) -> Result<()> {
        let t = Instant::now();
        let (_, trace) = b.solve(net, sc)?;
        let dt = t.elapsed().as_secs_f64();
        if !timed {
            return Ok(());
        }
        if trace.converged() {
            self.times.push(dt);
            self.iterations += trace.iterations();
        } else {
            self.failed += 1;
        }
        Ok(())
    }

    fn stats(mut self, name: &str) -> BackendTiming {
        let n = self.times.len();
        let total: f64 = self.times.iter().sum();
        let mean_s = if n == 0 { f64::NAN } else { total / n as f64 };
        let var_s = if n == 0 {
            f64::NAN
        } else {
            self.times.iter().map(|t| (t - mean_s).powi(2)).sum::<f64>() / n as f64
        };
        self.times.sort_by(f64::total_cmp);
        let median_s = match n {
            0 => f64::NAN,
            _ if n % 2 == 1 => self.times[n / 2],
            _ => 0.5 * (self.times[n / 2 - 1] + self.times[n / 2]),
        };
        BackendTiming {
            name: name.to_string(),
            n_runs: n,
            n_failed: self.failed,
            mean_s,
            median_s,
            max_s: self.times.last().copied().unwrap_or(f64::NAN),
            var_s,
            iterations: self.iterations,
            per_iter_mean_s: if self.iterations == 0 {
                f64::NAN
            } else {
                total / self.iterations as f64
            },
        }
    }
}

/// Times both backends on every scenario. Runs are sequential and
/// interleaved per repeat so slow drifts of the machine hit both equally.
pub fn benchmark(
    reference: &dyn Backend,
    candidate: &dyn Backend,
    net: &Network,
    scenarios: &[Scenario],
    cfg: BenchConfig,
) -> Result<TimingReport> {
    if scenarios.is_empty() || cfg.repeats == 0 {
        return Err(Error::InvalidArgument(
            "benchmark needs at least one scenario and one repeat".into(),
        ));
    }
    let (mut r, mut c) = (Runs::new(), Runs::new());
    for sc in scenarios {
        for _ in 0..cfg.warmup {
            r.run(reference, net, sc, false)?;
            c.run(candidate, net, sc, false)?;
        }
        for _ in 0..cfg.repeats {
            r.run(reference, net, sc, true)?;
            c.run(candidate, net, sc, true)?;
        }
    }
    let (reference, candidate) = (r.stats(reference.name()), c.stats(candidate.name()));
    Ok(TimingReport {
        speedup: reference.mean_s / candidate.mean_s,
        per_iter_speedup: reference.per_iter_mean_s / candidate.per_iter_mean_s,
        reference,
        candidate,
    })
}

/// One row per backend; the speedups are repeated on both rows.
pub fn write_timing_csv(report: &TimingReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "backend",
        "runs",
        "failed",
        "mean_s",
        "median_s",
        "max_s",
        "var_s2",
        "iterations",
        "per_iter_mean_s",
        "speedup",
        "per_iter_speedup",
    ])
    .map_err(csv_err)?;
    for b in [&report.reference, &report.candidate] {
        w.write_record([
            b.name.clone(),
            b.n_runs.to_string(),
            b.n_failed.to_string(),
            b.mean_s.to_string(),
            b.median_s.to_string(),
            b.max_s.to_string(),
            b.var_s.to_string(),
            b.iterations.to_string(),
            b.per_iter_mean_s.to_string(),
            report.speedup.to_string(),
            report.per_iter_speedup.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
