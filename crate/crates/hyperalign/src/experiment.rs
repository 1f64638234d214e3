//! Experiment configuration: one JSON document describing the dataset,
//! split, augmentation, model, trainer, and reporting of a run. Validation
//! is strict and every rejection names the offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::{ActiveConfig, QueryStrategy};
use crate::augment::AugmentPlan;
use crate::cube::SynthConfig;
use crate::datl::AdaptationConfig;
use crate::error::{Error, Result};
use crate::net::{parse_config, parse_config_no_pool, parse_layer_seq, FannSpec, LayerSpec, NetworkSpec};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitSettings,
    #[serde(default)]
    pub augment: Option<AugmentPlan>,
    pub model: ModelConfig,
    pub trainer: TrainerConfig,
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Generator settings for a synthetic scene pair.
    #[serde(default)]
    pub synthetic: Option<SynthConfig>,
    /// Generation seed for the synthetic scene (independent of run seeds).
    #[serde(default)]
    pub synthetic_seed: u64,
    /// Real scene files.
    #[serde(default)]
    pub paths: Option<ScenePaths>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePaths {
    pub source_cube: PathBuf,
    pub source_labels: PathBuf,
    #[serde(default)]
    pub target_cube: Option<PathBuf>,
    #[serde(default)]
    pub target_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSettings {
    /// Labeled training samples per class (source domain).
    pub per_class_train: usize,
    /// Labeled samples per class revealed in the target domain
    /// (adaptation runs); defaults to `per_class_train`.
    #[serde(default)]
    pub per_class_target: Option<usize>,
    pub seed: u64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            per_class_train: 5,
            per_class_target: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Config string for single-branch modes.
    #[serde(default)]
    pub network: Option<String>,
    /// Patch window (odd).
    #[serde(default = "default_window")]
    pub window: usize,
    /// Insert a max pool after each conv; defaults to true for spatial
    /// windows, false for window 1 where pooling is meaningless.
    #[serde(default)]
    pub auto_pool: Option<bool>,
    /// Dual-branch topology for adaptation runs.
    #[serde(default)]
    pub fann: Option<FannModelConfig>,
}

fn default_window() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FannModelConfig {
    pub source_network: String,
    pub target_network: String,
    pub aligned_pairs: Vec<(usize, usize)>,
    #[serde(default = "default_shared_dim")]
    pub shared_dim: usize,
    pub head: String,
}

fn default_shared_dim() -> usize {
    16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerMode {
    Supervised,
    SemisupRecon,
    Plssdl,
    Fann,
    Active,
}

impl std::fmt::Display for TrainerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            TrainerMode::Supervised => "supervised",
            TrainerMode::SemisupRecon => "semisup_recon",
            TrainerMode::Plssdl => "plssdl",
            TrainerMode::Fann => "fann",
            TrainerMode::Active => "active",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub mode: TrainerMode,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub lambda_recon: f64,
    #[serde(default)]
    pub datl_weights: Vec<f64>,
    #[serde(default = "d_refresh")]
    pub beta_refresh: usize,
    #[serde(default = "d_holdout")]
    pub beta_holdout: f64,
    #[serde(default)]
    pub freeze_depth: usize,
    #[serde(default = "d_cluster_k")]
    pub cluster_k: usize,
    #[serde(default = "d_restarts")]
    pub cluster_restarts: usize,
    #[serde(default = "d_head")]
    pub finetune_head: String,
    #[serde(default = "d_clip")]
    pub grad_clip: f64,
    #[serde(default = "d_decay")]
    pub weight_decay: f64,
    #[serde(default = "d_pretrain")]
    pub pretrain_epochs: usize,
    #[serde(default)]
    pub adaptation: AdaptationConfig,
    /// Active-learning settings (mode = "active").
    #[serde(default)]
    pub active: Option<ActiveSettings>,
}

fn d_epochs() -> usize {
    40
}
fn d_batch() -> usize {
    16
}
fn d_lr() -> f64 {
    0.05
}
fn d_refresh() -> usize {
    5
}
fn d_holdout() -> f64 {
    0.25
}
fn d_cluster_k() -> usize {
    8
}
fn d_restarts() -> usize {
    50
}
fn d_head() -> String {
    "softmax-2".into()
}
fn d_clip() -> f64 {
    5.0
}
fn d_decay() -> f64 {
    1e-3
}
fn d_pretrain() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveSettings {
    pub strategy: QueryStrategy,
    pub initial_per_class: usize,
    pub step: usize,
    pub budget: usize,
    #[serde(default)]
    pub scoring: ActiveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::config("config", format!("malformed JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {path:?}: {e}")))?;
        Self::from_json(&text)
    }

    /// Build the trainer settings for one run seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.trainer;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            seed,
            lambda_recon: t.lambda_recon,
            datl_weights: t.datl_weights.clone(),
            beta_refresh: t.beta_refresh,
            beta_holdout: t.beta_holdout,
            freeze_depth: t.freeze_depth,
            cluster_k: t.cluster_k,
            cluster_restarts: t.cluster_restarts,
            finetune_head: t.finetune_head.clone(),
            grad_clip: t.grad_clip,
            weight_decay: t.weight_decay,
            pretrain_epochs: t.pretrain_epochs,
            adaptation: t.adaptation.clone(),
        }
    }

    /// Parse the single-branch network with the configured window.
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let text = self.model.network.as_ref().ok_or_else(|| {
            Error::config("model.network", "this trainer mode needs a network string")
        })?;
        let auto_pool = self.model.auto_pool.unwrap_or(self.model.window > 1);
        let spec = if auto_pool {
            parse_config(text)
        } else {
            parse_config_no_pool(text)
        }
        .map_err(|e| Error::config("model.network", e.to_string()))?;
        Ok(spec.with_window(self.model.window))
    }

    /// Parse the dual-branch topology with the configured window.
    pub fn fann_spec(&self) -> Result<FannSpec> {
        let fc = self.model.fann.as_ref().ok_or_else(|| {
            Error::config("model.fann", "fann mode needs the dual-branch block")
        })?;
        let auto_pool = self.model.auto_pool.unwrap_or(self.model.window > 1);
        let parse = |field: &str, text: &str| -> Result<NetworkSpec> {
            let spec = if auto_pool {
                parse_config(text)
            } else {
                parse_config_no_pool(text)
            }
            .map_err(|e| Error::config(format!("model.fann.{field}"), e.to_string()))?;
            Ok(spec.with_window(self.model.window))
        };
        let source = parse("source_network", &fc.source_network)?;
        let target = parse("target_network", &fc.target_network)?;
        let head: Vec<LayerSpec> = parse_layer_seq(&fc.head)
            .map_err(|e| Error::config("model.fann.head", e.to_string()))?;
        FannSpec::new(
            source,
            target,
            fc.aligned_pairs.clone(),
            fc.shared_dim,
            head,
        )
        .map_err(|e| Error::config("model.fann", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset.synthetic, &self.dataset.paths) {
            (None, None) => {
                return Err(Error::config(
                    "dataset",
                    "either a synthetic block or a paths block is required",
                ))
            }
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "dataset",
                    "synthetic and paths blocks are mutually exclusive",
                ))
            }
            _ => {}
        }
        if let Some(paths) = &self.dataset.paths {
            let checks: [(&str, Option<&PathBuf>); 4] = [
                ("dataset.paths.source_cube", Some(&paths.source_cube)),
                ("dataset.paths.source_labels", Some(&paths.source_labels)),
                ("dataset.paths.target_cube", paths.target_cube.as_ref()),
                ("dataset.paths.target_labels", paths.target_labels.as_ref()),
            ];
            for (field, path) in checks {
                if let Some(path) = path {
                    if !path.exists() {
                        return Err(Error::config(field, format!("file {path:?} does not exist")));
                    }
                }
            }
            if paths.target_cube.is_some() != paths.target_labels.is_some() {
                return Err(Error::config(
                    "dataset.paths",
                    "target_cube and target_labels must be given together",
                ));
            }
        }

        if self.split.per_class_train == 0 {
            return Err(Error::config("split.per_class_train", "must be positive"));
        }
        if self.split.per_class_target == Some(0) {
            return Err(Error::config("split.per_class_target", "must be positive"));
        }

        if let Some(plan) = &self.augment {
            plan.validate()
                .map_err(|e| Error::config("augment", e.to_string()))?;
        }

        if self.model.window % 2 == 0 {
            return Err(Error::config("model.window", "must be odd"));
        }

        match self.trainer.mode {
            TrainerMode::Fann => {
                self.fann_spec()?;
            }
            TrainerMode::Active => {
                self.network_spec()?;
                let active = self.trainer.active.as_ref().ok_or_else(|| {
                    Error::config("trainer.active", "active mode needs an active block")
                })?;
                if active.initial_per_class == 0 {
                    return Err(Error::config(
                        "trainer.active.initial_per_class",
                        "must be positive",
                    ));
                }
                if active.step == 0 {
                    return Err(Error::config("trainer.active.step", "must be positive"));
                }
                if active.budget > 0 && active.budget < active.step {
                    return Err(Error::config(
                        "trainer.active.budget",
                        "must be zero or at least one step",
                    ));
                }
            }
            _ => {
                self.network_spec()?;
            }
        }

        // The shared trainer fields carry their own field-named checks.
        self.train_config(0).validate()?;

        if self.report.seeds.is_empty() {
            return Err(Error::config("report.seeds", "at least one seed is required"));
        }
        Ok(())
    }
}
