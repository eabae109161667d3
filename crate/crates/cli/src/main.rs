use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gridnewton::acopf::cost;
use gridnewton::dataset::{generate_dataset, read_dataset, write_dataset, DatasetConfig};
use gridnewton::eval::{
    benchmark, curves_csv, curves_svg, evaluate, iteration_curves, tracking_sim, write_metrics_csv,
    write_timing_csv, write_tracking_csv, Backend, BenchConfig, Learned, LoadWalk, Reference,
    TrackingConfig,
};
use gridnewton::grid::{
    derive_seeds, parse_case, perturb_loads, read_scenario_batch, read_scenario_csv,
    write_scenario_batch, Network, Scenario,
};
use gridnewton::learned::{fit, load_model, save_model, CompiledMlp, FitConfig, TrainingConfig};
use gridnewton::solver::{write_trace_jsonl, SolverOptions};

#[derive(Parser)]
#[command(
    name = "gridnewton",
    version,
    about = "AC optimal power flow with a learned fixed-point iterator"
)]
struct Cli {
    /// Worker threads for scenario fan-out (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve perturbed scenarios and harvest iteration pairs.
    Generate(GenerateArgs),
    /// Train the iterator network on a harvested dataset.
    Train(TrainArgs),
    /// Solve one scenario with the reference solver or a model.
    Solve(SolveArgs),
    /// Accuracy and feasibility metrics against the reference solver.
    Eval(EvalArgs),
    /// Time both backends.
    Bench(BenchArgs),
    /// Real-time tracking simulation with load updates every period.
    Track(TrackArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, default_value_t = 1000)]
    scenarios: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative load perturbation.
    #[arg(long, default_value_t = 0.4)]
    range: f64,
    #[arg(long, default_value_t = SolverOptions::DATA_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "train")]
    name: String,
    /// Also write the scenarios as CSV files into this directory.
    #[arg(long)]
    scenario_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "train")]
    name: String,
    #[arg(long)]
    case: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Learning-rate multiplier per epoch.
    #[arg(long, default_value_t = 1.0)]
    lr_decay: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Share of scenarios used for training; the rest validate.
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    /// Project the trained weights to this contraction margin.
    #[arg(long)]
    project_contraction: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Write per-epoch losses as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    case: PathBuf,
    /// Model file; without it the reference solver is used.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Scenario CSV (`bus_id,Pd_MW,Qd_MVAr`); defaults to the case loads.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = SolverOptions::TEST_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Write the iterates as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioSource {
    /// Directory written by `generate --scenario-dir`.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Otherwise draw this many scenarios.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Seed of the drawn scenarios; keep it apart from the training seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.4)]
    range: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    case: PathBuf,
    #[command(flatten)]
    source: ScenarioSource,
    #[arg(long, default_value_t = SolverOptions::TEST_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
    /// Plot iteration curves for this many scenarios.
    #[arg(long, default_value_t = 2)]
    curves: usize,
    /// Exit nonzero if any threshold below fails.
    #[arg(long = "assert")]
    assert_thresholds: bool,
    #[arg(long, default_value_t = 5.0)]
    max_mape: f64,
    #[arg(long, default_value_t = 0.02)]
    max_mae_v: f64,
    #[arg(long, default_value_t = 0.9)]
    min_convergence: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    case: PathBuf,
    #[command(flatten)]
    source: ScenarioSource,
    #[arg(long, default_value_t = SolverOptions::TEST_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    case: PathBuf,
    /// Simulated seconds.
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    #[arg(long, default_value_t = 1.0)]
    period: f64,
    /// Artificial delay added to every reference solve, seconds.
    #[arg(long, default_value_t = 0.0)]
    ref_delay: f64,
    /// Per-tick load step (relative).
    #[arg(long, default_value_t = 0.02)]
    step: f64,
    /// Load envelope around the base case (relative).
    #[arg(long, default_value_t = 0.4)]
    envelope: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SolverOptions::TEST_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Track(a) => track(a),
    }
}

fn load_case(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_case(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_compiled(path: &Path, net: &Network) -> Result<CompiledMlp> {
    let p = load_model(path).with_context(|| format!("loading {}", path.display()))?;
    if p.dims.outputs != net.n_state() {
        bail!(
            "model {} has {} outputs, the case has {} state variables",
            path.display(),
            p.dims.outputs,
            net.n_state()
        );
    }
    Ok(CompiledMlp::new(p))
}

fn scenarios(net: &Network, src: &ScenarioSource) -> Result<Vec<Scenario>> {
    match &src.scenarios {
        Some(dir) => Ok(read_scenario_batch(net, dir)?),
        None => Ok(derive_seeds(src.seed, src.count)
            .into_iter()
            .map(|s| perturb_loads(net, s, src.range))
            .collect::<gridnewton::Result<_>>()?),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let net = load_case(&a.case)?;
    let cfg = DatasetConfig {
        n_scenarios: a.scenarios,
        seed: a.seed,
        range: a.range,
        solver: SolverOptions {
            tol: a.tol,
            max_iter: a.max_iter,
            ..SolverOptions::default()
        },
    };
    let t = Instant::now();
    let data = generate_dataset(&net, &cfg)?;
    write_dataset(&data, &a.out, &a.name)?;
    if let Some(dir) = &a.scenario_dir {
        write_scenario_batch(&net, dir, a.scenarios, a.seed, a.range)?;
    }
    println!(
        "{} pairs from {}/{} feasible scenarios in {:.1} s -> {}",
        data.len(),
        data.manifest.n_feasible,
        a.scenarios,
        t.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let net = load_case(&a.case)?;
    let data = read_dataset(&a.data, &a.name)?;
    let cfg = FitConfig {
        hidden: a.hidden,
        train_fraction: a.train_fraction,
        project: a.project_contraction,
        training: TrainingConfig {
            learning_rate: a.lr,
            lr_decay: a.lr_decay,
            batch_size: a.batch,
            epochs: a.epochs,
            seed: a.seed,
            ..TrainingConfig::default()
        },
    };
    let t = Instant::now();
    let out = fit(&net, &data, &cfg)?;
    save_model(&out.params, &a.out)?;
    if let Some(path) = &a.history {
        let mut text = String::from("epoch,train_mse,val_mse\n");
        for h in &out.history {
            text.push_str(&format!("{},{},{}\n", h.epoch, h.train, h.val));
        }
        fs::write(path, text)?;
    }
    let best = out.history[out.best_epoch];
    println!(
        "{} train / {} validation pairs, hidden {}; best epoch {} (val mse {:.3e}) in {:.1} s",
        out.n_train,
        out.n_val,
        out.params.dims.hidden,
        out.best_epoch,
        best.val,
        t.elapsed().as_secs_f64()
    );
    if let Some(e) = out.diverged_at {
        println!("training diverged at epoch {e}; the best earlier parameters were kept");
    }
    println!(
        "contraction bound c = {:.4e} (c* = {:.4e}) -> {}",
        out.contraction.c,
        out.contraction.c_star,
        a.out.display()
    );
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    let net = load_case(&a.case)?;
    let sc = match &a.scenario {
        Some(p) => read_scenario_csv(&net, p)?,
        None => net.base_scenario(),
    };
    let model = a
        .model
        .as_deref()
        .map(|p| load_compiled(p, &net))
        .transpose()?;
    let reference = Reference::new(SolverOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        ..SolverOptions::default()
    });
    let learned = model.as_ref().map(|m| Learned::new(m, a.tol, a.max_iter));
    let backend: &dyn Backend = match &learned {
        Some(l) => l,
        None => &reference,
    };
    let t = Instant::now();
    let (x, trace) = backend.solve(&net, &sc)?;
    let elapsed = t.elapsed().as_secs_f64();
    if let Some(path) = &a.trace {
        write_trace_jsonl(&trace, fs::File::create(path)?)?;
    }
    let summary = serde_json::json!({
        "backend": backend.name(),
        "status": format!("{:?}", trace.status),
        "iterations": trace.iterations(),
        "cost": cost(&net, &x),
        "time_s": elapsed,
        "x": x,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let net = load_case(&a.case)?;
    let model = load_compiled(&a.model, &net)?;
    let scs = scenarios(&net, &a.source)?;
    fs::create_dir_all(&a.out)?;
    let rep = evaluate(&model, &net, &scs, a.tol, a.max_iter)?;
    write_metrics_csv(&rep, &a.out.join("metrics.csv"))?;

    let reference = Reference::new(SolverOptions::with_tol(a.tol));
    let learned = Learned::new(&model, a.tol, a.max_iter);
    let mut traces = Vec::new();
    for (i, sc) in scs.iter().enumerate().take(a.curves) {
        traces.push(("reference", i, reference.solve(&net, sc)?.1));
        traces.push(("learned", i, learned.solve(&net, sc)?.1));
    }
    if !traces.is_empty() {
        let refs: Vec<_> = traces.iter().map(|(b, i, t)| (*b, *i, t)).collect();
        let series = iteration_curves(&refs)?;
        fs::write(a.out.join("curves.csv"), curves_csv(&series))?;
        fs::write(a.out.join("curves.svg"), curves_svg(&series, Some(a.tol)))?;
    }

    println!("scenarios          {}", rep.rows.len());
    println!("reference failures {}", rep.n_ref_failed);
    println!("model converged    {:.1}%", 100.0 * rep.convergence_rate);
    println!("MAPE cost          {:.3}%", rep.mape_cost);
    println!("MAE v              {:.5} pu", rep.mae_v);
    println!("MAE Pg             {:.4} MW", rep.mae_p);
    println!("mean violation     {:.3e} pu", rep.mean_violation);
    println!("clamp violations   {}", rep.clamp_violations);

    if a.assert_thresholds {
        let mut failed = Vec::new();
        if !(rep.mape_cost <= a.max_mape) {
            failed.push(format!("MAPE {:.3}% > {}%", rep.mape_cost, a.max_mape));
        }
        if !(rep.mae_v <= a.max_mae_v) {
            failed.push(format!("MAE v {:.5} > {}", rep.mae_v, a.max_mae_v));
        }
        if !(rep.convergence_rate >= a.min_convergence) {
            failed.push(format!(
                "convergence {:.3} < {}",
                rep.convergence_rate, a.min_convergence
            ));
        }
        if rep.clamp_violations != 0 {
            failed.push(format!("{} clamp violations", rep.clamp_violations));
        }
        if !failed.is_empty() {
            bail!("thresholds failed: {}", failed.join("; "));
        }
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let net = load_case(&a.case)?;
    let model = load_compiled(&a.model, &net)?;
    let scs = scenarios(&net, &a.source)?;
    let reference = Reference::new(SolverOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        ..SolverOptions::default()
    });
    let learned = Learned::new(&model, a.tol, a.max_iter);
    let rep = benchmark(
        &reference,
        &learned,
        &net,
        &scs,
        BenchConfig {
            repeats: a.repeats,
            warmup: a.warmup,
        },
    )?;
    fs::create_dir_all(&a.out)?;
    write_timing_csv(&rep, &a.out.join("timing.csv"))?;
    for b in [&rep.reference, &rep.candidate] {
        println!(
            "{:<9} runs {:>4} failed {:>3} mean {:.3e} s max {:.3e} s var {:.3e} s² per-iter {:.3e} s",
            b.name, b.n_runs, b.n_failed, b.mean_s, b.max_s, b.var_s, b.per_iter_mean_s
        );
    }
    println!(
        "speedup {:.2}x, per-iteration {:.2}x",
        rep.speedup, rep.per_iter_speedup
    );
    Ok(())
}

fn track(a: TrackArgs) -> Result<()> {
    let net = load_case(&a.case)?;
    let model = load_compiled(&a.model, &net)?;
    if !(a.period > 0.0 && a.duration >= a.period) {
        bail!("need 0 < period <= duration");
    }
    let cfg = TrackingConfig {
        ticks: (a.duration / a.period).round() as usize,
        period_s: a.period,
        walk: LoadWalk {
            step: a.step,
            envelope: a.envelope,
            seed: a.seed,
        },
    };
    let reference = Reference::new(SolverOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        ..SolverOptions::default()
    });
    let learned = Learned::new(&model, a.tol, a.max_iter);
    let rep = tracking_sim(
        &[(&reference, a.ref_delay), (&learned, 0.0)],
        &reference,
        &net,
        &net.base_scenario(),
        &cfg,
    )?;
    fs::create_dir_all(&a.out)?;
    write_tracking_csv(&rep, &a.out.join("tracking.csv"))?;
    println!(
        "{} ticks: reference stale {:.0}%, learned stale {:.0}%",
        cfg.ticks,
        100.0 * rep.stale_fraction("reference"),
        100.0 * rep.stale_fraction("learned")
    );
    Ok(())
}
