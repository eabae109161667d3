//! Weight-magnitude contraction bound.
//!
//! Weights are measured in the coordinates the network actually maps
//! between, i.e. with the input and output normalization folded in:
//! `W1[h, j] / in_scale[j]` and `W2[i, h] · out_scale[i]`. With every such
//! weight at most `c*`, the map on raw states is Lipschitz with constant
//! `c*² · N_h · √(N_i · N_o)`, which never exceeds `c = N_n · c*` once
//! `c < 1`.

use serde::{Deserialize, Serialize};

use super::MlpParams;

/// All activations in the stack (shifted ReLU, tanh, clamped identity)
/// have slope at most one.
const F_PRIME_MAX: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub c_star: f64,
    pub n_nodes: usize,
    pub f_prime_max: f64,
    pub c: f64,
    pub is_contraction: bool,
}

pub fn contraction_modulus(p: &MlpParams) -> ContractionReport {
    let mut c_star = 0.0f64;
    for ((_, j), w) in p.w1.indexed_iter() {
        c_star = c_star.max((w / p.norm.in_scale[j]).abs());
    }
    for ((i, _), w) in p.w2.indexed_iter() {
        c_star = c_star.max((w * p.norm.out_scale[i]).abs());
    }
    let n_nodes = p.dims.nodes();
    let c = n_nodes as f64 * c_star * F_PRIME_MAX;
    ContractionReport {
        c_star,
        n_nodes,
        f_prime_max: F_PRIME_MAX,
        c,
        is_contraction: c < 1.0,
    }
}

/// Clip every effective weight to `margin / (N_n · f'_max)`; biases are
/// left alone. Returns the input unchanged when it already complies.
///
/// # Panics
/// If `margin` is outside `(0, 1)`.
pub fn project_contraction(p: &MlpParams, margin: f64) -> MlpParams {
    assert!(margin > 0.0 && margin < 1.0, "margin must lie in (0, 1)");
    // a few ulps of headroom so the recomputed modulus stays ≤ margin
    let limit = margin / (p.dims.nodes() as f64 * F_PRIME_MAX) * (1.0 - 8.0 * f64::EPSILON);
    let mut q = p.clone();
    for ((_, j), w) in q.w1.indexed_iter_mut() {
        let s = p.norm.in_scale[j];
        if (*w / s).abs() > limit {
            *w = (limit * s).copysign(*w);
        }
    }
    for ((i, _), w) in q.w2.indexed_iter_mut() {
        let s = p.norm.out_scale[i];
        if (*w * s).abs() > limit {
            *w = (limit / s).copysign(*w);
        }
    }
    q
}
