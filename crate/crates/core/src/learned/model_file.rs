//! Model files are JSON. Weights are one base64 blob of little-endian `f64`
//! values in the order `W1` (row-major, hidden × inputs), `b1`, `W2`
//! (row-major, outputs × hidden), `b2`.

use std::path::Path;

use base64::Engine;
use ndarray::{Array1, Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use super::{Dims, MlpParams};
use crate::dataset::NormStats;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "gridnewton-mlp";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Activations {
    input: String,
    input_shift: f64,
    hidden: String,
    output: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    dims: Dims,
    activations: Activations,
    clamp_lo: Vec<f64>,
    clamp_hi: Vec<f64>,
    norm_stats: NormStats,
    case_hash: String,
    byte_order: String,
    weights: String,
}

pub fn write_model(p: &MlpParams) -> Result<String> {
    let mut bytes = Vec::with_capacity(8 * p.dims.n_params());
    for v in p.w1.iter().chain(&p.b1).chain(&p.w2).chain(&p.b2) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        dims: p.dims,
        activations: Activations {
            input: "relu".into(),
            input_shift: p.input_shift,
            hidden: "tanh".into(),
            output: "clamp".into(),
        },
        clamp_lo: p.clamp_lo.clone(),
        clamp_hi: p.clamp_hi.clone(),
        norm_stats: p.norm.clone(),
        case_hash: p.case_hash.clone(),
        byte_order: "little-endian f64".into(),
        weights: base64::engine::general_purpose::STANDARD.encode(bytes),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn read_model(text: &str) -> Result<MlpParams> {
    let f: ModelFile = serde_json::from_str(text)?;
    if f.format != MODEL_FORMAT || f.version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format {} v{}",
            f.format, f.version
        )));
    }
    let a = &f.activations;
    if a.input != "relu" || a.hidden != "tanh" || a.output != "clamp" {
        return Err(Error::Format("unsupported activation stack".into()));
    }
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(f.weights.as_bytes())
        .map_err(|e| Error::Format(format!("weights: {e}")))?;
    let d = f.dims;
    if bytes.len() != 8 * d.n_params() {
        return Err(Error::Format(format!(
            "weight blob has {} bytes, expected {}",
            bytes.len(),
            8 * d.n_params()
        )));
    }
    let mut vals = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |n: usize| -> Vec<f64> { vals.by_ref().take(n).collect() };
    let w1_rows = Array2::from_shape_vec((d.hidden, d.inputs), take(d.hidden * d.inputs))
        .expect("shape checked");
    let mut w1 = Array2::zeros((d.hidden, d.inputs).f());
    w1.assign(&w1_rows);
    let b1 = Array1::from(take(d.hidden));
    let w2 = Array2::from_shape_vec((d.outputs, d.hidden), take(d.outputs * d.hidden))
        .expect("shape checked");
    let b2 = Array1::from(take(d.outputs));
    let mut p = MlpParams::new(d, f.clamp_lo, f.clamp_hi, 0)?.with_norm(f.norm_stats)?;
    p.w1 = w1;
    p.b1 = b1;
    p.w2 = w2;
    p.b2 = b2;
    p.input_shift = a.input_shift;
    p.case_hash = f.case_hash;
    if !p.is_finite() {
        return Err(Error::NonFinite("model weights"));
    }
    Ok(p)
}

pub fn save_model(p: &MlpParams, path: &Path) -> Result<()> {
    std::fs::write(path, write_model(p)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpParams> {
    read_model(&std::fs::read_to_string(path)?)
}
