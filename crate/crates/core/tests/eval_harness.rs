mod common;

use common::{case30, rel_err};
use gridnewton::dataset::{generate_dataset, normalize_stats, DatasetConfig};
use gridnewton::eval::{
    benchmark, compare, curves_csv, curves_svg, evaluate, iteration_curves, mean_abs_error,
    tracking_sim, write_metrics_csv, Backend, BenchConfig, Learned, LoadWalk, Reference,
    TrackingConfig,
};
use gridnewton::grid::{perturb_loads, Network, Scenario};
use gridnewton::learned::{contraction_modulus, init_network, project_contraction, CompiledMlp};
use gridnewton::solver::SolverOptions;

fn projected_model(net: &Network) -> CompiledMlp {
    let data = generate_dataset(
        net,
        &DatasetConfig {
            n_scenarios: 4,
            seed: 0,
            ..Default::default()
        },
    )
    .unwrap();
    let p = init_network(net, Some(100), 1)
        .unwrap()
        .with_norm(normalize_stats(&data).unwrap())
        .unwrap();
    CompiledMlp::new(project_contraction(&p, 0.9))
}

fn scenarios(net: &Network, n: u64) -> Vec<Scenario> {
    (0..n)
        .map(|s| perturb_loads(net, 100 + s, 0.4).unwrap())
        .collect()
}

#[test]
fn mean_absolute_error_by_hand() {
    assert!((mean_abs_error(&[1.0, 1.1], &[1.0, 1.0]) - 0.05).abs() < 1e-15);
    assert_eq!(mean_abs_error(&[], &[]), 0.0);
}

#[test]
fn reference_against_itself_scores_zero() {
    let net = case30();
    let r = Reference::new(SolverOptions::with_tol(1e-4));
    let (lo, hi) = gridnewton::acopf::StateVector::bounds(&net);
    let rep = compare(&r, &r, &net, &scenarios(&net, 6), (&lo, &hi)).unwrap();
    assert_eq!((rep.mae_v, rep.mae_p, rep.mape_cost), (0.0, 0.0, 0.0));
    assert_eq!(rep.convergence_rate, 1.0);
    assert_eq!(
        (
            rep.n_included,
            rep.n_ref_failed,
            rep.n_nn_failed,
            rep.clamp_violations
        ),
        (6, 0, 0, 0)
    );
    assert!(rep.mean_violation < 1e-4);
    assert!(compare(&r, &r, &net, &[], (&lo, &hi)).is_err());
}

#[test]
fn metrics_are_row_means_and_order_free() {
    let net = case30();
    let m = projected_model(&net);
    let scs = scenarios(&net, 8);
    let rep = evaluate(&m, &net, &scs, 1e-4, 200).unwrap();
    assert_eq!(rep.rows.len(), 8);
    let inc: Vec<_> = rep.rows.iter().filter(|r| r.included()).collect();
    assert_eq!(inc.len(), rep.n_included);
    assert!(rep.n_included > 0);
    let avg = |f: fn(&gridnewton::eval::ScenarioRow) -> f64| {
        inc.iter().map(|r| f(r)).sum::<f64>() / inc.len() as f64
    };
    assert_eq!(rep.mae_v, avg(|r| r.mae_v));
    assert_eq!(rep.mae_p, avg(|r| r.mae_p));
    assert_eq!(rep.mean_violation, avg(|r| r.violation));
    assert_eq!(rep.mape_cost, avg(|r| r.ape_cost.unwrap()));
    for r in &rep.rows {
        assert!(
            r.mae_v >= 0.0 && r.mae_p >= 0.0 && r.violation >= 0.0 && r.ape_cost.unwrap() >= 0.0
        );
        assert_eq!(r.clamp_violations, 0);
    }

    let mut rev = scs.clone();
    rev.reverse();
    let back = evaluate(&m, &net, &rev, 1e-4, 200).unwrap();
    for (a, b) in [
        (rep.mae_v, back.mae_v),
        (rep.mae_p, back.mae_p),
        (rep.mape_cost, back.mape_cost),
    ] {
        assert!(rel_err(a, b) < 1e-12);
    }
    assert_eq!(rep.convergence_rate, back.convergence_rate);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    write_metrics_csv(&rep, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10);
    assert!(lines[0].starts_with("scenario,seed,"));
    let last: Vec<&str> = lines[9].split(',').collect();
    assert_eq!(last[0], "mean");
    assert_eq!(last[9].parse::<f64>().unwrap(), rep.mae_v);
    write_metrics_csv(&rep, &dir.path().join("again.csv")).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(dir.path().join("again.csv")).unwrap()
    );
}

#[test]
fn benchmark_statistics() {
    let net = case30();
    let r = Reference::new(SolverOptions::with_tol(1e-4));
    let m = projected_model(&net);
    let l = Learned::new(&m, 1e-4, 200);
    let scs = scenarios(&net, 4);
    let rep = benchmark(
        &r,
        &l,
        &net,
        &scs,
        BenchConfig {
            repeats: 2,
            warmup: 1,
        },
    )
    .unwrap();
    for b in [&rep.reference, &rep.candidate] {
        assert_eq!(b.n_runs + b.n_failed, 8);
        assert!(b.max_s >= b.mean_s && b.mean_s > 0.0);
        assert!(b.max_s >= b.median_s && b.var_s >= 0.0);
        assert!(b.per_iter_mean_s > 0.0);
    }
    assert_eq!(rep.reference.name, "reference");
    assert_eq!(rep.candidate.name, "learned");
    assert_eq!(rep.speedup, rep.reference.mean_s / rep.candidate.mean_s);
    assert!(benchmark(&r, &l, &net, &[], BenchConfig::default()).is_err());
}

#[test]
fn backend_against_itself_has_unit_speedup() {
    let net = case30();
    let r = Reference::new(SolverOptions::with_tol(1e-4));
    let scs = scenarios(&net, 10);
    let rep = benchmark(
        &r,
        &r,
        &net,
        &scs,
        BenchConfig {
            repeats: 10,
            warmup: 2,
        },
    )
    .unwrap();
    assert!(
        (0.9..=1.1).contains(&rep.speedup),
        "speedup {}",
        rep.speedup
    );
}

#[test]
fn iteration_curves_follow_the_solvers() {
    let net = case30();
    assert!(iteration_curves(&[]).is_err());

    let sc = perturb_loads(&net, 5, 0.4).unwrap();
    let r = Reference::new(SolverOptions::with_tol(1e-4));
    let (_, tr) = r.solve(&net, &sc).unwrap();
    assert!(tr.converged());
    let m = projected_model(&net);
    let c = contraction_modulus(m.params()).c;
    let (_, tn) = Learned::new(&m, 1e-8, 500).solve(&net, &sc).unwrap();
    assert!(tn.converged());

    let series = iteration_curves(&[("reference", 5, &tr), ("learned", 5, &tn)]).unwrap();
    assert!(*series[0].step_norms.last().unwrap() <= 1e-4);
    for w in series[1].step_norms.windows(2) {
        assert!(w[1] <= c * w[0] + 1e-15);
    }

    let csv = curves_csv(&series);
    assert_eq!(csv.lines().count(), 1 + tr.iterations() + tn.iterations());
    assert!(csv.lines().nth(1).unwrap().starts_with("reference,5,1,"));
    let svg = curves_svg(&series, Some(1e-4));
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("stroke-dasharray"));
}

fn tracking(
    period_s: f64,
    walk: LoadWalk,
    ref_delay: f64,
) -> (gridnewton::eval::TrackingReport, CompiledMlp, Network) {
    let net = case30();
    let m = projected_model(&net);
    let r = Reference::new(SolverOptions::with_tol(1e-4));
    let cfg = TrackingConfig {
        ticks: 12,
        period_s,
        walk,
    };
    let rep = {
        let l = Learned::new(&m, 1e-4, 200);
        tracking_sim(
            &[(&r, ref_delay), (&l, 0.0)],
            &r,
            &net,
            &net.base_scenario(),
            &cfg,
        )
        .unwrap()
    };
    (rep, m, net)
}

#[test]
fn long_period_tracking_matches_evaluation() {
    let walk = LoadWalk {
        seed: 3,
        ..Default::default()
    };
    let (rep, m, net) = tracking(1e6, walk, 0.0);
    assert_eq!(rep.stale_fraction("reference"), 0.0);
    assert_eq!(rep.stale_fraction("learned"), 0.0);
    let scs = walk.scenarios(&net.base_scenario(), 12).unwrap();
    let ev = evaluate(&m, &net, &scs, 1e-4, 200).unwrap();
    for (t, row) in rep.ticks.iter().zip(&ev.rows) {
        assert_eq!(t.published[0].cost, row.ref_cost);
        assert_eq!(t.published[1].cost, row.nn_cost);
        assert_eq!(t.true_cost, row.ref_cost);
        assert_eq!(t.published[1].source_tick, Some(t.tick));
    }
}

#[test]
fn load_walk_stays_in_its_envelope() {
    let net = case30();
    let base = net.base_scenario();
    let walk = LoadWalk {
        step: 0.2,
        envelope: 0.3,
        seed: 9,
    };
    let scs = walk.scenarios(&base, 50).unwrap();
    assert_eq!(scs[0].pd, base.pd);
    for sc in &scs {
        for (d, b) in sc.pd.iter().zip(&base.pd).chain(sc.qd.iter().zip(&base.qd)) {
            assert!((d - b).abs() <= 0.3 * b.abs() + 1e-12);
        }
    }
    for w in scs.windows(2) {
        for (a, b) in w[0]
            .pd
            .iter()
            .zip(&w[1].pd)
            .zip(&base.pd)
            .map(|((a, b), c)| ((a - b).abs(), *c))
        {
            assert!(a <= 0.2 * b.abs() + 1e-12);
        }
    }
    assert!(LoadWalk {
        envelope: 1.0,
        ..walk
    }
    .scenarios(&base, 2)
    .is_err());
}

#[test]
fn still_loads_give_constant_setpoints() {
    let (rep, _, _) = tracking(
        1.0,
        LoadWalk {
            step: 0.0,
            ..Default::default()
        },
        0.0,
    );
    let first: Vec<f64> = rep.ticks[0].published.iter().map(|p| p.cost).collect();
    for t in &rep.ticks[1..] {
        let now: Vec<f64> = t.published.iter().map(|p| p.cost).collect();
        assert_eq!(now, first);
    }
}

#[test]
fn delayed_reference_goes_stale() {
    let (rep, _, _) = tracking(1.0, LoadWalk::default(), 1.5);
    assert_eq!(rep.stale_fraction("reference"), 1.0);
    assert_eq!(rep.stale_fraction("learned"), 0.0);
    // the delayed backend publishes results two ticks old from tick 1 on
    assert_eq!(rep.ticks[0].published[0].source_tick, None);
    assert!(rep.ticks[0].published[0].cost.is_nan());
    for t in &rep.ticks[1..] {
        let src = t.published[0].source_tick.unwrap();
        assert!(src < t.tick && t.tick - src <= 2);
    }

    let (rep, _, _) = tracking(1.0, LoadWalk::default(), 0.5);
    assert_eq!(rep.stale_fraction("reference"), 0.0);
}
