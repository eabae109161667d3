use serde::{Deserialize, Serialize};

use super::{
    contraction_modulus, init_network, project_contraction, train, tuned_hidden, ContractionReport,
    EpochLoss, MlpParams, Samples, TrainingConfig,
};
use crate::dataset::{normalize_stats, split, Dataset};
use crate::error::{Error, Result};
use crate::grid::Network;

/// End-to-end training from a harvested dataset. `training.seed` also
/// drives the scenario split and the weight initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Hidden width; `None` picks the tuned size for the case, else the heuristic.
    pub hidden: Option<usize>,
    /// Share of scenarios used for training; the rest validate.
    pub train_fraction: f64,
    /// Contraction margin applied after training.
    pub project: Option<f64>,
    pub training: TrainingConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            hidden: None,
            train_fraction: 0.9,
            project: None,
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub params: MlpParams,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub diverged_at: Option<usize>,
    pub contraction: ContractionReport,
    pub n_train: usize,
    pub n_val: usize,
}

pub fn fit(net: &Network, data: &Dataset, cfg: &FitConfig) -> Result<FitOutcome> {
    if let Some(m) = cfg.project {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "contraction margin must lie in (0, 1), got {m}"
            )));
        }
    }
    if data.manifest.case_hash != net.case_hash() {
        return Err(Error::InvalidArgument(
            "dataset was generated for a different case".into(),
        ));
    }
    let seed = cfg.training.seed;
    let (tr, va) = split(data, cfg.train_fraction, seed)?;
    let hidden = cfg.hidden.or_else(|| tuned_hidden(net.n_bus()));
    let p = init_network(net, hidden, seed)?.with_norm(normalize_stats(&tr)?)?;
    let out = train(
        &p,
        &Samples::from_dataset(&tr),
        &Samples::from_dataset(&va),
        &cfg.training,
    )?;
    let params = match cfg.project {
        Some(m) => project_contraction(&out.params, m),
        None => out.params,
    };
    Ok(FitOutcome {
        contraction: contraction_modulus(&params),
        params,
        history: out.history,
        best_epoch: out.best_epoch,
        diverged_at: out.diverged_at,
        n_train: tr.len(),
        n_val: va.len(),
    })
}
