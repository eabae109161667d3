#![allow(dead_code)]

use gridnewton::acopf::{inequality_values, power_mismatch, DualState, OpfProblem, StateVector};
use gridnewton::grid::{parse_case, Network, Scenario};
use rand::Rng;

pub const CASE30: &str = include_str!("../../data/case30.m");
pub const CASE2: &str = include_str!("../../data/case2.m");

pub fn case30() -> Network {
    parse_case(CASE30).expect("case30 parses")
}

pub fn case2() -> Network {
    parse_case(CASE2).expect("case2 parses")
}

/// Two buses joined by one line; slack generator at bus 1, optional load at bus 2.
pub fn two_bus(r: f64, x: f64, b: f64, pd: f64, qd: f64) -> Network {
    let text = format!(
        "mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1 0 135 1 1.1 0.9;
2 1 {pd} {qd} 0 0 1 1 0 135 1 1.1 0.9;
];
mpc.gen = [
1 0 0 100 -100 1 100 1 200 0;
];
mpc.branch = [
1 2 {r} {x} {b} 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
2 0 0 3 0.01 10 5;
];
"
    );
    parse_case(&text).expect("two-bus case parses")
}

pub fn random_interior_state(net: &Network, rng: &mut impl Rng) -> StateVector {
    let base = net.base_mva;
    let mut x = StateVector::flat_start(net);
    for (v, b) in x.v.iter_mut().zip(&net.buses) {
        *v = rng.gen_range(b.v_min..b.v_max);
    }
    for (i, t) in x.theta.iter_mut().enumerate() {
        *t = if i == net.slack_bus() {
            0.0
        } else {
            rng.gen_range(-0.3..0.3)
        };
    }
    for k in 0..net.n_gen() {
        let g = net.online_gen(k);
        x.pg[k] = rng.gen_range(g.p_min..g.p_max) / base;
        x.qg[k] = rng.gen_range(g.q_min..g.q_max) / base;
    }
    x
}

pub fn random_duals(net: &Network, rng: &mut impl Rng) -> DualState {
    let ni = 2 * (net.n_bus() + 2 * net.n_gen());
    DualState {
        lambda: (0..2 * net.n_bus())
            .map(|_| rng.gen_range(-50.0..50.0))
            .collect(),
        mu: (0..ni).map(|_| rng.gen_range(0.1..10.0)).collect(),
        slacks: (0..ni).map(|_| rng.gen_range(0.01..1.0)).collect(),
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Dense Gaussian elimination with partial pivoting; `None` when singular.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-14 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Newton power flow on the mismatch equations. Generator buses hold
/// their voltage, non-slack generators their real output; the slack
/// generator and all reactive outputs absorb the balance. Assumes at most
/// one generator per bus. Returns the solved state or `None` on divergence.
pub fn power_flow(net: &Network, sc: &Scenario, setpoint: &StateVector) -> Option<StateVector> {
    let nb = net.n_bus();
    let slack = net.slack_bus();
    let mut gen_at = vec![None; nb];
    for k in 0..net.n_gen() {
        gen_at[net.online_gen(k).bus] = Some(k);
    }
    let th_idx: Vec<usize> = (0..nb).filter(|&i| i != slack).collect();
    let v_idx: Vec<usize> = (0..nb).filter(|&i| gen_at[i].is_none()).collect();
    let mut x = setpoint.clone();
    x.theta[slack] = 0.0;
    let problem = OpfProblem::new(net, sc).expect("dims");
    let mismatch = |x: &StateVector| problem.mismatch(&problem.to_vars(x));
    let eval = |x: &StateVector| -> Vec<f64> {
        let g = mismatch(x);
        th_idx
            .iter()
            .map(|&i| g[i])
            .chain(v_idx.iter().map(|&i| g[nb + i]))
            .collect()
    };
    let set = |x: &mut StateVector, u: &[f64]| {
        for (k, &i) in th_idx.iter().enumerate() {
            x.theta[i] = u[k];
        }
        for (k, &i) in v_idx.iter().enumerate() {
            x.v[i] = u[th_idx.len() + k];
        }
    };
    let mut u: Vec<f64> = th_idx
        .iter()
        .map(|&i| x.theta[i])
        .chain(v_idx.iter().map(|&i| x.v[i]))
        .collect();
    let mut converged = false;
    for _ in 0..20 {
        set(&mut x, &u);
        let f = eval(&x);
        if f.iter().all(|v| v.abs() < 1e-11) {
            converged = true;
            break;
        }
        let y = problem.to_vars(&x);
        let full = problem.jacobian_matrix(&problem.derivatives(&y, &vec![0.0; 2 * nb]));
        let rows: Vec<usize> = th_idx
            .iter()
            .copied()
            .chain(v_idx.iter().map(|&i| nb + i))
            .collect();
        let cols: Vec<usize> = th_idx
            .iter()
            .map(|&i| problem.layout.theta(i).expect("non-slack angle"))
            .chain(v_idx.iter().map(|&i| problem.layout.v(i)))
            .collect();
        let jac: Vec<Vec<f64>> = rows
            .iter()
            .map(|&r| cols.iter().map(|&c| full.get(r, c)).collect())
            .collect();
        let du = dense_solve(jac, f.iter().map(|v| -v).collect())?;
        for (a, d) in u.iter_mut().zip(&du) {
            *a += d;
        }
    }
    if !converged || x.v.iter().any(|&v| v <= 0.0) {
        return None;
    }
    // balance the slack real power and all reactive outputs
    let g = mismatch(&x);
    for i in 0..nb {
        if let Some(k) = gen_at[i] {
            if i == slack {
                x.pg[k] += g[i];
            }
            x.qg[k] += g[nb + i];
        }
    }
    Some(x)
}

/// Power-flow solution around `center` with generator setpoints jittered by
/// up to `spread` of their range, kept only when every bound holds.
pub fn random_feasible_point(
    net: &Network,
    sc: &Scenario,
    center: &StateVector,
    spread: f64,
    rng: &mut impl Rng,
) -> Option<StateVector> {
    let base = net.base_mva;
    let mut x = center.clone();
    for k in 0..net.n_gen() {
        let g = net.online_gen(k);
        let b = &net.buses[g.bus];
        x.v[g.bus] = (x.v[g.bus] + rng.gen_range(-1.0..=1.0) * spread * (b.v_max - b.v_min))
            .clamp(b.v_min, b.v_max);
        if g.bus != net.slack_bus() {
            let (lo, hi) = (g.p_min / base, g.p_max / base);
            x.pg[k] = (x.pg[k] + rng.gen_range(-1.0..=1.0) * spread * (hi - lo)).clamp(lo, hi);
        }
    }
    let x = power_flow(net, sc, &x)?;
    let g = power_mismatch(net, sc, &x).ok()?;
    let h = inequality_values(net, &x).ok()?;
    (g.iter().all(|v| v.abs() < 1e-9) && h.iter().all(|&v| v <= 0.0)).then_some(x)
}
