//! Mini-batch Adam on the mean squared error of normalized next states.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            lr_decay: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 100,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("learning rate decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam decay rates must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be at least 1");
        }
        Ok(())
    }
}

/// Raw (unnormalized) training rows: inputs `[x_k | loads]`, targets `x_next`.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Samples {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Dimension(
                "inputs and targets differ in row count".into(),
            ));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training samples"));
        }
        Ok(Samples { inputs, targets })
    }

    pub fn from_dataset(data: &Dataset) -> Self {
        let (m, n) = (data.len(), data.n_state());
        let inputs = Array2::from_shape_fn((m, data.n_inputs()), |(i, j)| {
            if j < n {
                data.x_k(i)[j]
            } else {
                data.loads(i)[j - n]
            }
        });
        let targets = Array2::from_shape_fn((m, n), |(i, j)| data.x_next(i)[j]);
        Samples { inputs, targets }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Gradients {
    fn zeros_like(p: &MlpParams) -> Self {
        Gradients {
            w1: Array2::zeros(p.w1.raw_dim()),
            b1: Array1::zeros(p.b1.raw_dim()),
            w2: Array2::zeros(p.w2.raw_dim()),
            b2: Array1::zeros(p.b2.raw_dim()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen, initialization included.
    pub params: MlpParams,
    /// Entry 0 holds the losses at initialization.
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    /// Epoch at which a non-finite loss stopped training.
    pub diverged_at: Option<usize>,
}

/// Input activations and normalized targets; neither depends on trainable
/// parameters, so they are computed once per sample set.
struct Prepared {
    a: Array2<f64>,
    t: Array2<f64>,
}

fn prepare(p: &MlpParams, s: &Samples) -> Result<Prepared> {
    if s.inputs.ncols() != p.dims.inputs || s.targets.ncols() != p.dims.outputs {
        return Err(Error::Dimension(format!(
            "samples have {}/{} columns, model expects {}/{}",
            s.inputs.ncols(),
            s.targets.ncols(),
            p.dims.inputs,
            p.dims.outputs
        )));
    }
    let mut a = s.inputs.clone();
    for mut row in a.rows_mut() {
        Zip::from(&mut row)
            .and(&p.norm.in_mean[..])
            .and(&p.norm.in_scale[..])
            .for_each(|u, m, sc| {
                *u = ((*u - m) / sc + p.input_shift).max(0.0);
            });
    }
    let mut t = s.targets.clone();
    for mut row in t.rows_mut() {
        Zip::from(&mut row)
            .and(&p.norm.out_mean[..])
            .and(&p.norm.out_scale[..])
            .for_each(|u, m, sc| *u = (*u - m) / sc);
    }
    Ok(Prepared { a, t })
}

/// Mean squared error over a batch and, optionally, its gradient. The clamp
/// passes gradient only strictly inside the bounds.
fn batch_loss(
    p: &MlpParams,
    a: ArrayView2<f64>,
    t: ArrayView2<f64>,
    grad: Option<&mut Gradients>,
) -> f64 {
    let b = a.nrows();
    if b == 0 {
        return 0.0;
    }
    let mut h = a.dot(&p.w1.t());
    h += &p.b1;
    h.mapv_inplace(f64::tanh);
    let mut o = h.dot(&p.w2.t());
    o += &p.b2;

    let denom = (b * p.dims.outputs) as f64;
    let mut loss = 0.0;
    let mut d_o = Array2::<f64>::zeros(o.raw_dim());
    for ((r, i), &ov) in o.indexed_iter() {
        let (m, sc) = (p.norm.out_mean[i], p.norm.out_scale[i]);
        let x = m + sc * ov;
        let (pred, inside) = if x <= p.clamp_lo[i] {
            ((p.clamp_lo[i] - m) / sc, false)
        } else if x >= p.clamp_hi[i] {
            ((p.clamp_hi[i] - m) / sc, false)
        } else {
            (ov, true)
        };
        let diff = pred - t[[r, i]];
        loss += diff * diff;
        if inside {
            d_o[[r, i]] = 2.0 * diff / denom;
        }
    }
    if let Some(g) = grad {
        g.w2 = d_o.t().dot(&h);
        g.b2 = d_o.sum_axis(Axis(0));
        let mut dz = d_o.dot(&p.w2);
        Zip::from(&mut dz)
            .and(&h)
            .for_each(|d, &hv| *d *= 1.0 - hv * hv);
        g.w1 = dz.t().dot(&a);
        g.b1 = dz.sum_axis(Axis(0));
    }
    loss / denom
}

pub fn mse(p: &MlpParams, s: &Samples) -> Result<f64> {
    let prep = prepare(p, s)?;
    Ok(chunked_mse(p, &prep))
}

fn chunked_mse(p: &MlpParams, prep: &Prepared) -> f64 {
    const CHUNK: usize = 4096;
    let m = prep.a.nrows();
    if m == 0 {
        return f64::NAN;
    }
    let mut total = 0.0;
    let mut start = 0;
    while start < m {
        let end = (start + CHUNK).min(m);
        let l = batch_loss(
            p,
            prep.a.slice(s![start..end, ..]),
            prep.t.slice(s![start..end, ..]),
            None,
        );
        total += l * (end - start) as f64;
        start = end;
    }
    total / m as f64
}

/// Full-batch loss and exact gradient.
pub fn loss_and_gradient(p: &MlpParams, s: &Samples) -> Result<(f64, Gradients)> {
    let prep = prepare(p, s)?;
    let mut g = Gradients::zeros_like(p);
    let l = batch_loss(p, prep.a.view(), prep.t.view(), Some(&mut g));
    Ok((l, g))
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl Adam {
    fn update(&mut self, p: &mut MlpParams, g: &Gradients, cfg: &TrainingConfig, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
        let upd = |w: &mut f64, gv: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * gv;
            *v = b2 * *v + (1.0 - b2) * gv * gv;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        Zip::from(&mut p.w1)
            .and(&g.w1)
            .and(&mut self.m.w1)
            .and(&mut self.v.w1)
            .for_each(|w, &gv, m, v| upd(w, gv, m, v));
        Zip::from(&mut p.b1)
            .and(&g.b1)
            .and(&mut self.m.b1)
            .and(&mut self.v.b1)
            .for_each(|w, &gv, m, v| upd(w, gv, m, v));
        Zip::from(&mut p.w2)
            .and(&g.w2)
            .and(&mut self.m.w2)
            .and(&mut self.v.w2)
            .for_each(|w, &gv, m, v| upd(w, gv, m, v));
        Zip::from(&mut p.b2)
            .and(&g.b2)
            .and(&mut self.m.b2)
            .and(&mut self.v.b2)
            .for_each(|w, &gv, m, v| upd(w, gv, m, v));
    }
}

/// Trains `p` on `train`, tracking the validation loss after every epoch.
/// Single-threaded and deterministic for a fixed `cfg.seed`.
pub fn train(
    p: &MlpParams,
    train: &Samples,
    val: &Samples,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let tr = prepare(p, train)?;
    let va = prepare(p, val)?;
    let mut cur = p.clone();
    let mut history = vec![EpochLoss {
        epoch: 0,
        train: chunked_mse(&cur, &tr),
        val: chunked_mse(&cur, &va),
    }];
    let mut best = (history[0].val, 0usize, cur.clone());
    let mut adam = Adam {
        m: Gradients::zeros_like(p),
        v: Gradients::zeros_like(p),
        step: 0,
    };
    let mut g = Gradients::zeros_like(p);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut diverged_at = None;

    let mut lr = cfg.learning_rate;
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let a = tr.a.select(Axis(0), idx);
            let t = tr.t.select(Axis(0), idx);
            let l = batch_loss(&cur, a.view(), t.view(), Some(&mut g));
            if !l.is_finite() {
                diverged_at = Some(epoch);
                break 'epochs;
            }
            sum += l * idx.len() as f64;
            adam.update(&mut cur, &g, cfg, lr);
        }
        let val_loss = chunked_mse(&cur, &va);
        if !val_loss.is_finite() || !cur.is_finite() {
            diverged_at = Some(epoch);
            break;
        }
        lr *= cfg.lr_decay;
        history.push(EpochLoss {
            epoch,
            train: sum / train.len() as f64,
            val: val_loss,
        });
        log::debug!(
            "epoch {epoch}: train {:.3e} val {val_loss:.3e}",
            sum / train.len() as f64
        );
        if val_loss < best.0 {
            best = (val_loss, epoch, cur.clone());
        }
    }
    if let Some(e) = diverged_at {
        log::warn!("training stopped at epoch {e}: non-finite loss");
    }
    Ok(TrainOutcome {
        params: best.2,
        history,
        best_epoch: best.1,
        diverged_at,
    })
}
