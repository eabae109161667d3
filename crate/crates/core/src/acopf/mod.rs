//! AC OPF functions: objective, power-balance equalities, box inequalities,
//! and the perturbed KKT system with its exact Jacobian.
//!
//! Internally every quantity is per-unit on the system base; costs are in
//! $/h with coefficients in MW units. The optimization unknowns exclude the
//! slack-bus angle (see [`VarLayout`]).

mod problem;
mod state;

pub use problem::{BoxBound, Derivatives, OpfProblem};
pub use state::{DualState, Residuals, StateVector, VarLayout};

use crate::error::{Error, Result};
use crate::grid::{Network, Scenario};
use crate::sparse::CscMatrix;

/// Power mismatch at every bus, `[ΔP; ΔQ]` in per-unit (length `2·N_B`).
pub fn power_mismatch(net: &Network, sc: &Scenario, x: &StateVector) -> Result<Vec<f64>> {
    x.check_dims(net)?;
    let p = OpfProblem::new(net, sc)?;
    Ok(p.mismatch(&state_vars(&p, x)))
}

/// Generation cost in $/h.
pub fn cost(net: &Network, x: &StateVector) -> f64 {
    let base = net.base_mva;
    (0..net.n_gen())
        .map(|k| net.online_gen(k).cost.eval(x.pg[k] * base))
        .sum()
}

/// Box inequalities `h(x) ≤ 0`, ordered `[v lower, v upper, Pg lower,
/// Pg upper, Qg lower, Qg upper]`; each block runs over buses or in-service
/// generators in order.
pub fn inequality_values(net: &Network, x: &StateVector) -> Result<Vec<f64>> {
    x.check_dims(net)?;
    let p = OpfProblem::new(net, &net.base_scenario())?;
    Ok(p.inequality(&state_vars(&p, x)))
}

pub fn residuals(net: &Network, sc: &Scenario, x: &StateVector) -> Result<Residuals> {
    x.check_dims(net)?;
    let p = OpfProblem::new(net, sc)?;
    let y = state_vars(&p, x);
    Ok(Residuals {
        equality: p.mismatch(&y),
        inequality: p.inequality(&y).into_iter().map(|h| h.max(0.0)).collect(),
        objective: cost(net, x),
    })
}

/// Angles enter only through differences, so referencing them to the slack
/// bus leaves every evaluated quantity unchanged.
fn state_vars(p: &OpfProblem<'_>, x: &StateVector) -> Vec<f64> {
    p.to_vars(x)
}

fn check_kkt_inputs(
    p: &OpfProblem<'_>,
    x: &StateVector,
    d: &DualState,
    barrier: f64,
) -> Result<()> {
    if !x.is_finite() || !d.is_finite() || !barrier.is_finite() {
        return Err(Error::NonFinite("KKT inputs"));
    }
    if barrier < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "barrier must be nonnegative, got {barrier}"
        )));
    }
    if d.lambda.len() != p.n_eq() || d.mu.len() != p.n_ineq() || d.slacks.len() != p.n_ineq() {
        return Err(Error::Dimension(
            "dual state does not match the network".into(),
        ));
    }
    Ok(())
}

/// Perturbed KKT residual `[∇f + Jgᵀλ + Jhᵀμ; g; h + s; s∘μ − barrier·1]`.
/// With `barrier = 0` this is the exact first-order optimality residual.
pub fn kkt_residual(
    net: &Network,
    sc: &Scenario,
    x: &StateVector,
    d: &DualState,
    barrier: f64,
) -> Result<Vec<f64>> {
    x.check_dims(net)?;
    let p = OpfProblem::new(net, sc)?;
    check_kkt_inputs(&p, x, d, barrier)?;
    let y = p.to_vars(x);
    let der = p.derivatives(&y, &d.lambda);
    Ok(p.kkt_residual(&der, &y, d, barrier))
}

/// Analytic Jacobian of [`kkt_residual`] with respect to `(y, λ, μ, s)`,
/// where `y` is the state without the slack angle. The barrier only shifts
/// the residual, so the matrix does not depend on it.
pub fn kkt_jacobian(
    net: &Network,
    sc: &Scenario,
    x: &StateVector,
    d: &DualState,
    barrier: f64,
) -> Result<CscMatrix> {
    x.check_dims(net)?;
    let p = OpfProblem::new(net, sc)?;
    check_kkt_inputs(&p, x, d, barrier)?;
    let y = p.to_vars(x);
    let der = p.derivatives(&y, &d.lambda);
    Ok(p.kkt_jacobian(&der, d))
}
