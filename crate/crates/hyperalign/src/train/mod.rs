//! Training orchestration: supervised baseline, reconstruction-regularized
//! semi-supervision, pseudo-label pretraining plus fine-tuning, the
//! dual-branch adaptation trainer, and evaluation.
//!
//! Every trainer is a pure function of (spec, data, config): one seed
//! drives shuffling, dropout, and initialization, so identical inputs give
//! bit-identical histories.

mod cluster;
mod eval;
mod fann;
mod plssdl;
mod recon;
mod supervised;

pub use cluster::{cluster_pseudo, Clusterer, FixedLabels, KMeans};
pub use eval::{
    confusion_matrix, evaluate, format_mean_std, mean_std, overall_accuracy, EvalReport,
};
pub use fann::{
    fann_features, fann_predict, init_fann_params, layer_probe, train_fann, FannParams,
    LinearMap, ProbePoint,
};
pub use plssdl::{finetune, pretrain_pseudo};
pub use recon::train_semisup_recon;
pub use supervised::train_supervised;

use crate::cube::PatchSet;

/// Continue SGD training on existing parameters (warm starts, resumed
/// rounds). Same epoch loop as [`train_supervised`], same determinism.
pub fn run_sgd_on(
    spec: &NetworkSpec,
    params: &mut ParamStore,
    labeled: &PatchSet,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    supervised::run_classifier_sgd(spec, params, labeled, cfg, None, cfg.epochs)
}

use serde::{Deserialize, Serialize};

use crate::datl::AdaptationConfig;
use crate::error::{Error, Result};
use crate::net::{FannSpec, NetworkSpec, ParamStore};

/// Shared trainer settings. Mode-specific fields are ignored by trainers
/// that do not use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Weight of the reconstruction term in the joint semi-supervised loss.
    pub lambda_recon: f64,
    /// Per-aligned-pair weights on the alignment loss; missing entries
    /// default to 1.
    pub datl_weights: Vec<f64>,
    /// Epochs between re-estimations of the per-pair trade-off weight.
    pub beta_refresh: usize,
    /// Fraction of each domain's labeled samples reserved for trade-off
    /// estimation (0 estimates on the training slice itself).
    pub beta_holdout: f64,
    /// Pretrained layers kept frozen during fine-tuning, counted over
    /// parameterized trunk layers.
    pub freeze_depth: usize,
    /// Cluster count for pseudo-label pretraining.
    pub cluster_k: usize,
    /// Restart cap for the default k-means clusterer.
    pub cluster_restarts: usize,
    /// Head attached at fine-tune time, in layer-sequence grammar.
    pub finetune_head: String,
    /// Global gradient-norm cap per adaptation step (0 disables). The
    /// alignment ratio is unbounded, so long runs need the cap to keep
    /// feature scales finite.
    pub grad_clip: f64,
    /// Weight decay on branch and projection weights during adaptation
    /// (0 disables). Bounds the latent scale the unbounded ratio would
    /// otherwise inflate.
    pub weight_decay: f64,
    /// Supervised epochs each branch trains alone on its own domain before
    /// the joint adaptation loop. Alignment needs class-structured
    /// features to align; pulling on random latents scrambles them.
    pub pretrain_epochs: usize,
    pub adaptation: AdaptationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.05,
            seed: 0,
            lambda_recon: 0.0,
            datl_weights: Vec::new(),
            beta_refresh: 5,
            beta_holdout: 0.25,
            freeze_depth: 0,
            cluster_k: 8,
            cluster_restarts: 50,
            finetune_head: "softmax-2".into(),
            grad_clip: 5.0,
            weight_decay: 1e-3,
            pretrain_epochs: 20,
            adaptation: AdaptationConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Front-end validation. Trainer functions additionally accept
    /// `epochs == 0` as an explicit no-op for programmatic use.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("trainer.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("trainer.batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("trainer.learning_rate", "must be positive"));
        }
        if self.lambda_recon < 0.0 {
            return Err(Error::config("trainer.lambda_recon", "must be nonnegative"));
        }
        if self.datl_weights.iter().any(|w| *w < 0.0) {
            return Err(Error::config("trainer.datl_weights", "must be nonnegative"));
        }
        if self.beta_refresh == 0 {
            return Err(Error::config("trainer.beta_refresh", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta_holdout) {
            return Err(Error::config("trainer.beta_holdout", "must be in [0, 1)"));
        }
        if self.grad_clip < 0.0 {
            return Err(Error::config("trainer.grad_clip", "must be nonnegative"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("trainer.weight_decay", "must be nonnegative"));
        }
        self.adaptation
            .validate()
            .map_err(|e| Error::config("trainer.adaptation", e.to_string()))?;
        Ok(())
    }

    /// Stable hash of the full config for provenance records.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        format!("{:016x}", fnv1a(json.as_bytes()))
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// One epoch of recorded loss components. `total` is always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub components: Vec<(String, f64)>,
}

impl EpochRecord {
    pub fn total(&self) -> f64 {
        self.component("total").unwrap_or(f64::NAN)
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// Render a history as CSV with one column per component.
pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut out = String::new();
    if history.is_empty() {
        return "epoch,total\n".into();
    }
    let names: Vec<&str> = history[0]
        .components
        .iter()
        .map(|(n, _)| n.as_str())
        .collect();
    out.push_str("epoch,");
    out.push_str(&names.join(","));
    out.push('\n');
    for record in history {
        out.push_str(&record.epoch.to_string());
        for name in &names {
            out.push(',');
            out.push_str(&format!("{}", record.component(name).unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

/// Where a trained model's weights live.
#[derive(Debug, Clone)]
pub enum ModelArch {
    Single {
        spec: NetworkSpec,
        params: ParamStore,
    },
    Fann {
        spec: FannSpec,
        params: FannParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

/// A trained network plus its per-epoch loss history and provenance.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub arch: ModelArch,
    pub history: Vec<EpochRecord>,
    pub provenance: Provenance,
}

impl TrainedModel {
    pub fn single(&self) -> Result<(&NetworkSpec, &ParamStore)> {
        match &self.arch {
            ModelArch::Single { spec, params } => Ok((spec, params)),
            ModelArch::Fann { .. } => Err(Error::State(
                "expected a single-branch model, found an adaptation model".into(),
            )),
        }
    }

    pub fn fann(&self) -> Result<(&FannSpec, &FannParams)> {
        match &self.arch {
            ModelArch::Fann { spec, params } => Ok((spec, params)),
            ModelArch::Single { .. } => Err(Error::State(
                "expected an adaptation model, found a single-branch model".into(),
            )),
        }
    }

    /// Predicted class labels (1-based) for a patch set. Adaptation models
    /// route the set through the branch matching its domain tag.
    pub fn predict(&self, set: &crate::cube::PatchSet) -> Result<Vec<u32>> {
        match &self.arch {
            ModelArch::Single { spec, params } => {
                let probs = crate::net::predict_probs(spec, params, set)?;
                Ok(argmax_labels(&probs))
            }
            ModelArch::Fann { spec, params } => fann_predict(spec, params, set),
        }
    }
}

/// Row-wise argmax as 1-based labels, ties to the lowest class index.
pub(crate) fn argmax_labels(probs: &crate::tensor::Tensor) -> Vec<u32> {
    let (n, c) = (probs.dims[0], probs.dims[1]);
    (0..n)
        .map(|i| {
            let row = probs.row(i);
            let mut best = 0usize;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best as u32 + 1
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = TrainConfig::default();
        let mut b = TrainConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.learning_rate = 0.1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn history_csv_has_component_columns() {
        let history = vec![
            EpochRecord {
                epoch: 0,
                components: vec![("total".into(), 1.5), ("ce".into(), 1.5)],
            },
            EpochRecord {
                epoch: 1,
                components: vec![("total".into(), 1.0), ("ce".into(), 1.0)],
            },
        ];
        let csv = history_to_csv(&history);
        assert!(csv.starts_with("epoch,total,ce\n"));
        assert!(csv.contains("1,1,1"));
    }

    #[test]
    fn validate_rejects_zero_epochs() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }
}
