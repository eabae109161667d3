mod common;

use common::{case30, rel_err};
use gridnewton::acopf::StateVector;
use gridnewton::dataset::{generate_dataset, normalize_stats, DatasetConfig, NormStats};
use gridnewton::grid::{perturb_loads, Network};
use gridnewton::learned::{
    contraction_modulus, fixed_point_solve, fixed_point_solve_from, forward, heuristic_hidden,
    init_network, loss_and_gradient, mse, project_contraction, read_model, train, write_model,
    CompiledMlp, Dims, LoadContext, MlpParams, Samples, TrainingConfig,
};
use gridnewton::solver::SolveStatus;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn case30_model(net: &Network) -> MlpParams {
    let data = generate_dataset(
        net,
        &DatasetConfig {
            n_scenarios: 4,
            seed: 0,
            ..Default::default()
        },
    )
    .unwrap();
    init_network(net, Some(100), 1)
        .unwrap()
        .with_norm(normalize_stats(&data).unwrap())
        .unwrap()
}

fn random_state(p: &MlpParams, rng: &mut impl Rng) -> Vec<f64> {
    p.clamp_lo
        .iter()
        .zip(&p.clamp_hi)
        .map(|(l, h)| rng.gen_range(*l..*h))
        .collect()
}

#[test]
fn sizing_for_case30() {
    let net = case30();
    let p = init_network(&net, None, 0).unwrap();
    assert_eq!(
        p.dims,
        Dims {
            inputs: 112,
            hidden: 90,
            outputs: 72
        }
    );
    assert_eq!(heuristic_hidden(112, 72), 90);
    let q = init_network(&net, Some(100), 0).unwrap();
    assert_eq!(q.dims.hidden, 100);
    assert_eq!(contraction_modulus(&q).n_nodes, 284);
    assert!(init_network(&net, Some(0), 0).is_err());
    assert_eq!(
        init_network(&net, None, 7).unwrap(),
        init_network(&net, None, 7).unwrap()
    );
    assert_ne!(
        init_network(&net, None, 7).unwrap().w1,
        init_network(&net, None, 8).unwrap().w1
    );
    let (lo, hi) = StateVector::bounds(&net);
    assert_eq!((p.clamp_lo, p.clamp_hi), (lo, hi));
}

#[test]
fn sizing_for_tiled_300_bus_case() {
    let net = gridnewton::grid::parse_case(include_str!("../data/case300_tiled.m")).unwrap();
    let p = init_network(&net, Some(800), 0).unwrap();
    assert_eq!(p.dims.inputs, 1120);
    assert_eq!(p.dims.outputs, net.n_state());
}

#[test]
fn zero_weights_give_a_constant_map() {
    let net = case30();
    let mut p = case30_model(&net);
    p.w1.fill(0.0);
    p.w2.fill(0.0);
    p.b2.iter_mut()
        .enumerate()
        .for_each(|(i, b)| *b = 0.1 * i as f64 - 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let loads = perturb_loads(&net, 1, 0.4).unwrap().loads_pu(&net);
    let expect: Vec<f64> = (0..72)
        .map(|i| {
            (p.norm.out_mean[i] + p.norm.out_scale[i] * p.b2[i]).clamp(p.clamp_lo[i], p.clamp_hi[i])
        })
        .collect();
    for _ in 0..5 {
        assert_eq!(
            forward(&p, &random_state(&p, &mut rng), &loads).unwrap(),
            expect
        );
    }
    let report = contraction_modulus(&p);
    assert_eq!(
        (report.c_star, report.c, report.is_contraction),
        (0.0, 0.0, true)
    );

    let sc = perturb_loads(&net, 1, 0.4).unwrap();
    let (x, tr) = fixed_point_solve(&CompiledMlp::new(p.clone()), &net, &sc, 1e-4, 50).unwrap();
    // one move onto the constant, then a zero step confirms it
    assert_eq!(tr.status, SolveStatus::Converged);
    assert_eq!(tr.step_norms.last().copied(), Some(0.0));
    assert!(tr.iterations() <= 2);
    assert_eq!(x.flatten(), expect);
    assert!(tr.kkt_norms.is_empty());
}

#[test]
fn forward_checks_inputs() {
    let net = case30();
    let p = case30_model(&net);
    let loads = vec![0.1; 40];
    assert!(forward(&p, &[0.0; 71], &loads).is_err());
    assert!(forward(&p, &[0.0; 72], &loads[..39]).is_err());
    let mut x = vec![1.0; 72];
    x[3] = f64::NAN;
    assert!(forward(&p, &x, &loads).is_err());
}

#[test]
fn load_context_matches_forward() {
    let net = case30();
    let p = case30_model(&net);
    let m = CompiledMlp::new(p.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let loads = perturb_loads(&net, 4, 0.4).unwrap().loads_pu(&net);
    let ctx = LoadContext::new(&m, &loads).unwrap();
    for _ in 0..20 {
        let x = random_state(&p, &mut rng);
        let a = forward(&p, &x, &loads).unwrap();
        let mut b = vec![0.0; 72];
        ctx.apply(&x, &mut b);
        for (u, v) in a.iter().zip(&b) {
            // single-precision weights: relative error per weight below 2^-23
            assert!((u - v).abs() <= 1e-5 * (1.0 + u.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn outputs_respect_clamp(seed in 0u64..1000, scale in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.01..3.0)).collect();
        let mut p = MlpParams::new(Dims { inputs: 10, hidden: 7, outputs: 6 }, lo.clone(), hi.clone(), seed).unwrap();
        p.w2.mapv_inplace(|w| w * scale);
        p.b2.mapv_inplace(|_| rng.gen_range(-10.0..10.0));
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let loads: Vec<f64> = (0..4).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let out = forward(&p, &x, &loads).unwrap();
        for i in 0..6 {
            prop_assert!(out[i] >= lo[i] && out[i] <= hi[i]);
        }
    }
}

fn toy_samples(rng: &mut impl Rng, m: usize, n_in: usize, n_out: usize) -> Samples {
    let inputs = Array2::from_shape_fn((m, n_in), |_| rng.gen_range(-1.0..1.0));
    let targets = Array2::from_shape_fn((m, n_out), |_| rng.gen_range(-1.0..1.0));
    Samples::new(inputs, targets).unwrap()
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = Dims {
        inputs: 2,
        hidden: 1,
        outputs: 2,
    };
    let mut p = MlpParams::new(dims, vec![-100.0; 2], vec![100.0; 2], 9).unwrap();
    p.b1[0] = 0.3;
    p.b2[0] = -0.2;
    p.norm = NormStats {
        in_mean: vec![0.1, -0.2],
        in_scale: vec![0.7, 1.3],
        out_mean: vec![0.5, 0.0],
        out_scale: vec![2.0, 0.4],
    };
    let s = toy_samples(&mut rng, 9, 2, 2);
    let (_, g) = loss_and_gradient(&p, &s).unwrap();

    let h = 1e-6;
    let fd = |p: &MlpParams, f: &dyn Fn(&mut MlpParams, f64)| {
        let (mut a, mut b) = (p.clone(), p.clone());
        f(&mut a, h);
        f(&mut b, -h);
        (mse(&a, &s).unwrap() - mse(&b, &s).unwrap()) / (2.0 * h)
    };
    let mut checked = 0;
    for (idx, gv) in g.w1.indexed_iter() {
        let d = fd(&p, &|q, e| q.w1[idx] += e);
        assert!(
            rel_err(*gv, d) <= 1e-4 * gv.abs().max(1e-3),
            "w1{idx:?}: {gv} vs {d}"
        );
        checked += 1;
    }
    for (idx, gv) in g.w2.indexed_iter() {
        let d = fd(&p, &|q, e| q.w2[idx] += e);
        assert!(
            rel_err(*gv, d) <= 1e-4 * gv.abs().max(1e-3),
            "w2{idx:?}: {gv} vs {d}"
        );
        checked += 1;
    }
    for (i, gv) in g.b1.iter().enumerate() {
        let d = fd(&p, &|q, e| q.b1[i] += e);
        assert!(rel_err(*gv, d) <= 1e-4 * gv.abs().max(1e-3));
        checked += 1;
    }
    for (i, gv) in g.b2.iter().enumerate() {
        let d = fd(&p, &|q, e| q.b2[i] += e);
        assert!(rel_err(*gv, d) <= 1e-4 * gv.abs().max(1e-3));
        checked += 1;
    }
    assert_eq!(checked, dims.n_params());
}

#[test]
fn fits_a_repeated_fixed_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows = Array2::from_shape_fn((500, 10), |(_, j)| x[j]);
    let set = Samples::new(rows.clone(), rows).unwrap();
    let p = MlpParams::new(
        Dims {
            inputs: 10,
            hidden: 20,
            outputs: 10,
        },
        vec![-10.0; 10],
        vec![10.0; 10],
        0,
    )
    .unwrap();
    let cfg = TrainingConfig {
        epochs: 200,
        batch_size: 32,
        ..Default::default()
    };
    let out = train(&p, &set, &set, &cfg).unwrap();
    let best = out.history[out.best_epoch].val;
    assert!(best < 1e-6, "best val {best:e}");
    let y = forward(&out.params, &x, &[]).unwrap();
    assert!(y.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-2));
}

#[test]
fn learns_an_identity_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = Dims {
        inputs: 10,
        hidden: 40,
        outputs: 10,
    };
    let inputs = Array2::from_shape_fn((2000, 10), |_| rng.gen_range(-1.0..1.0));
    let train_set = Samples::new(inputs.clone(), inputs).unwrap();
    let v = Array2::from_shape_fn((200, 10), |_| rng.gen_range(-1.0..1.0));
    let val_set = Samples::new(v.clone(), v).unwrap();
    let stats = NormStats {
        in_mean: vec![0.0; 10],
        in_scale: vec![0.577; 10],
        out_mean: vec![0.0; 10],
        out_scale: vec![0.577; 10],
    };
    let p = MlpParams::new(dims, vec![-10.0; 10], vec![10.0; 10], 0)
        .unwrap()
        .with_norm(stats)
        .unwrap();
    let cfg = TrainingConfig {
        epochs: 200,
        batch_size: 16,
        ..Default::default()
    };
    let out = train(&p, &train_set, &val_set, &cfg).unwrap();
    let best = out.history[out.best_epoch].val;
    assert!(
        best < 1e-3 * out.history[0].val,
        "best val {best:e} from {:e}",
        out.history[0].val
    );
    assert!(out.history.iter().all(|h| h.val >= best));
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = MlpParams::new(
        Dims {
            inputs: 4,
            hidden: 3,
            outputs: 2,
        },
        vec![-5.0; 2],
        vec![5.0; 2],
        4,
    )
    .unwrap();
    let s = toy_samples(&mut rng, 50, 4, 2);
    let cfg = TrainingConfig {
        epochs: 5,
        learning_rate: 0.0,
        ..Default::default()
    };
    let out = train(&p, &s, &s, &cfg).unwrap();
    assert_eq!(out.params, p);
    assert_eq!(out.history.len(), 6);
    assert!(out.history.windows(2).all(|w| w[0].val == w[1].val));
}

#[test]
fn training_is_deterministic_and_never_worse_than_init() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = MlpParams::new(
        Dims {
            inputs: 6,
            hidden: 5,
            outputs: 4,
        },
        vec![-5.0; 4],
        vec![5.0; 4],
        1,
    )
    .unwrap();
    let (tr, va) = (
        toy_samples(&mut rng, 300, 6, 4),
        toy_samples(&mut rng, 60, 6, 4),
    );
    let cfg = TrainingConfig {
        epochs: 20,
        learning_rate: 0.05,
        ..Default::default()
    };
    let a = train(&p, &tr, &va, &cfg).unwrap();
    let b = train(&p, &tr, &va, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    assert!(mse(&a.params, &va).unwrap() <= a.history[0].val);
    assert!(train(&p, &tr, &va, &TrainingConfig { epochs: 0, ..cfg }).is_err());
}

#[test]
fn contraction_report_is_homogeneous() {
    let net = case30();
    let p = case30_model(&net);
    let r = contraction_modulus(&p);
    let mut q = p.clone();
    q.w1.mapv_inplace(|w| -2.5 * w);
    q.w2.mapv_inplace(|w| -2.5 * w);
    let rq = contraction_modulus(&q);
    assert!(rel_err(rq.c_star, 2.5 * r.c_star) < 1e-14);
    assert!(rel_err(rq.c, 2.5 * r.c) < 1e-14);
    assert_eq!(r.f_prime_max, 1.0);
}

#[test]
fn projection_bounds_the_lipschitz_constant() {
    let net = case30();
    let p = project_contraction(&case30_model(&net), 0.9);
    let r = contraction_modulus(&p);
    assert!(r.c <= 0.9 && r.is_contraction);
    assert_eq!(project_contraction(&p, 0.9), p);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let loads = perturb_loads(&net, rng.gen(), 0.4).unwrap().loads_pu(&net);
        let (u, w) = (random_state(&p, &mut rng), random_state(&p, &mut rng));
        let (fu, fw) = (
            forward(&p, &u, &loads).unwrap(),
            forward(&p, &w, &loads).unwrap(),
        );
        let num: f64 = fu
            .iter()
            .zip(&fw)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = u
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(num <= r.c * den + 1e-12);
    }

    let m = CompiledMlp::new(p.clone());
    let sc = perturb_loads(&net, 3, 0.4).unwrap();
    let (_, tr) = fixed_point_solve(&m, &net, &sc, 1e-10, 500).unwrap();
    assert!(tr.converged());
    for w in tr.step_norms.windows(2) {
        assert!(w[1] <= r.c * w[0] + 1e-15);
    }

    let loads = sc.loads_pu(&net);
    let limits: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            let run = fixed_point_solve_from(&m, &loads, &random_state(&p, &mut rng), 1e-10, 500)
                .unwrap();
            assert_eq!(run.status, SolveStatus::Converged);
            run.states.last().unwrap().clone()
        })
        .collect();
    for a in &limits {
        for b in &limits {
            let d: f64 = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            assert!(d <= 1e-6);
        }
    }
}

#[test]
fn model_file_round_trip() {
    let net = case30();
    let p = case30_model(&net);
    let text = write_model(&p).unwrap();
    assert_eq!(read_model(&text).unwrap(), p);
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["weights"] = serde_json::Value::String("AAAA".into());
    assert!(read_model(&v.to_string()).is_err());
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["activations"]["hidden"] = serde_json::Value::String("sigmoid".into());
    assert!(read_model(&v.to_string()).is_err());
}
