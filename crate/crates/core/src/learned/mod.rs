//! Learned fixed-point iterator `x^{k+1} = F(x^k; loads)`.
//!
//! `F` is a single-hidden-layer network: normalized inputs pass through a
//! shifted ReLU, a tanh hidden layer and a linear output that is
//! denormalized and clamped to the variable bounds.

mod contraction;
mod fit;
mod fixed_point;
mod model_file;
mod train;

use ndarray::{Array1, Array2, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acopf::StateVector;
use crate::dataset::NormStats;
use crate::error::{Error, Result};
use crate::grid::Network;

pub use contraction::{contraction_modulus, project_contraction, ContractionReport};
pub use fit::{fit, FitConfig, FitOutcome};
pub use fixed_point::{
    fixed_point_solve, fixed_point_solve_from, CompiledMlp, FlatTrace, LoadContext,
};
pub use model_file::{load_model, read_model, save_model, write_model, MODEL_FORMAT};
pub use train::{
    loss_and_gradient, mse, train, EpochLoss, Gradients, Samples, TrainOutcome, TrainingConfig,
};

/// Default shift added to normalized inputs before the ReLU, so features
/// down to three standard deviations below their mean pass unchanged.
pub const DEFAULT_INPUT_SHIFT: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl Dims {
    /// Total node count `N_i + N_h + N_o`.
    pub fn nodes(&self) -> usize {
        self.inputs + self.hidden + self.outputs
    }

    pub fn n_params(&self) -> usize {
        self.hidden * (self.inputs + 1) + self.outputs * (self.hidden + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub dims: Dims,
    /// `hidden × inputs`, stored column-major so that the weights of one
    /// input feature are contiguous.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `outputs × hidden`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// Input activation is `max(z + input_shift, 0)` on normalized `z`.
    pub input_shift: f64,
    pub clamp_lo: Vec<f64>,
    pub clamp_hi: Vec<f64>,
    pub norm: NormStats,
    /// Hash of the network the model was built for; empty for toy models.
    pub case_hash: String,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases, identity normalization.
    pub fn new(dims: Dims, clamp_lo: Vec<f64>, clamp_hi: Vec<f64>, seed: u64) -> Result<Self> {
        if dims.inputs == 0 || dims.hidden == 0 || dims.outputs == 0 {
            return Err(Error::InvalidArgument(
                "every layer needs at least one node".into(),
            ));
        }
        if dims.inputs < dims.outputs {
            return Err(Error::Dimension("inputs must contain the state".into()));
        }
        if clamp_lo.len() != dims.outputs || clamp_hi.len() != dims.outputs {
            return Err(Error::Dimension(
                "clamp bounds must have one entry per output".into(),
            ));
        }
        if clamp_lo.iter().zip(&clamp_hi).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidArgument("clamp bounds need lo < hi".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit1 = (6.0 / (dims.hidden + dims.inputs) as f64).sqrt();
        let w1 = Array2::from_shape_fn((dims.hidden, dims.inputs).f(), |_| {
            rng.gen_range(-limit1..=limit1)
        });
        let limit2 = (6.0 / (dims.outputs + dims.hidden) as f64).sqrt();
        let w2 = Array2::from_shape_fn((dims.outputs, dims.hidden), |_| {
            rng.gen_range(-limit2..=limit2)
        });
        Ok(MlpParams {
            dims,
            w1,
            b1: Array1::zeros(dims.hidden),
            w2,
            b2: Array1::zeros(dims.outputs),
            input_shift: DEFAULT_INPUT_SHIFT,
            clamp_lo,
            clamp_hi,
            norm: NormStats::identity(dims.inputs, dims.outputs),
            case_hash: String::new(),
        })
    }

    pub fn with_norm(mut self, norm: NormStats) -> Result<Self> {
        if norm.in_mean.len() != self.dims.inputs
            || norm.in_scale.len() != self.dims.inputs
            || norm.out_mean.len() != self.dims.outputs
            || norm.out_scale.len() != self.dims.outputs
        {
            return Err(Error::Dimension(
                "normalization does not match the network dimensions".into(),
            ));
        }
        if norm
            .in_scale
            .iter()
            .chain(&norm.out_scale)
            .any(|s| !(*s > 0.0))
        {
            return Err(Error::InvalidArgument(
                "normalization scales must be positive".into(),
            ));
        }
        self.norm = norm;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite())
    }

    /// Width of the load block of the input (`2·N_L`).
    pub fn n_load_inputs(&self) -> usize {
        self.dims.inputs - self.dims.outputs
    }

    /// Normalized, shifted and rectified input activation.
    pub fn input_activation(&self, input: &[f64]) -> Vec<f64> {
        input
            .iter()
            .zip(&self.norm.in_mean)
            .zip(&self.norm.in_scale)
            .map(|((u, m), s)| ((u - m) / s + self.input_shift).max(0.0))
            .collect()
    }

    /// Denormalize raw outputs and clamp them into bounds, in place.
    fn finish_output(&self, o: &mut [f64]) {
        for (i, v) in o.iter_mut().enumerate() {
            *v = (self.norm.out_mean[i] + self.norm.out_scale[i] * *v)
                .clamp(self.clamp_lo[i], self.clamp_hi[i]);
        }
    }
}

/// Hidden-layer size suggested by `⌈√(N_i · N_o)⌉`.
pub fn heuristic_hidden(inputs: usize, outputs: usize) -> usize {
    let p = inputs * outputs;
    let mut h = (p as f64).sqrt() as usize;
    while h * h < p {
        h += 1;
    }
    while h > 0 && (h - 1) * (h - 1) >= p {
        h -= 1;
    }
    h
}

/// Hidden sizes tuned for the standard benchmark cases, keyed by bus count.
pub fn tuned_hidden(n_bus: usize) -> Option<usize> {
    match n_bus {
        30 => Some(100),
        300 => Some(800),
        500 => Some(2300),
        1354 => Some(6000),
        _ => None,
    }
}

/// Network sized for `net`: `N_i = 2·N_L + n`, `N_o = n`, hidden layer from
/// the heuristic unless overridden. Clamps come from the variable bounds.
pub fn init_network(net: &Network, hidden_override: Option<usize>, seed: u64) -> Result<MlpParams> {
    let n = net.n_state();
    let inputs = n + 2 * net.n_load();
    let hidden = match hidden_override {
        Some(0) => {
            return Err(Error::InvalidArgument(
                "hidden layer size must be at least 1".into(),
            ))
        }
        Some(h) => h,
        None => heuristic_hidden(inputs, n),
    };
    let (lo, hi) = StateVector::bounds(net);
    let mut p = MlpParams::new(
        Dims {
            inputs,
            hidden,
            outputs: n,
        },
        lo,
        hi,
        seed,
    )?;
    p.case_hash = net.case_hash().to_string();
    Ok(p)
}

/// One application of the network to `[x_k | loads]`.
pub fn forward(p: &MlpParams, x_k: &[f64], loads: &[f64]) -> Result<Vec<f64>> {
    if x_k.len() != p.dims.outputs || loads.len() != p.n_load_inputs() {
        return Err(Error::Dimension(format!(
            "expected state {} and loads {}, got {} and {}",
            p.dims.outputs,
            p.n_load_inputs(),
            x_k.len(),
            loads.len()
        )));
    }
    if x_k.iter().chain(loads).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input"));
    }
    let input: Vec<f64> = x_k.iter().chain(loads).copied().collect();
    let a = Array1::from(p.input_activation(&input));
    let h = (p.w1.dot(&a) + &p.b1).mapv(f64::tanh);
    let mut o = (p.w2.dot(&h) + &p.b2).to_vec();
    p.finish_output(&mut o);
    Ok(o)
}
