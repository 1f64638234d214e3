//! Pseudo-label pretraining and fine-tuning: cluster the unlabeled pool,
//! train the trunk against cluster assignments, then discard the pseudo
//! head, bolt on a fresh classifier, and learn only the unfrozen layers
//! from the few real labels.

use crate::cube::PatchSet;
use crate::error::{Error, Result};
use crate::net::{init_params, parse_layer_seq, LayerSpec, NetworkSpec};

use super::cluster::{cluster_patches, Clusterer};
use super::supervised::{check_labels, run_classifier_sgd};
use super::{ModelArch, Provenance, TrainConfig, TrainedModel};

/// Cluster the unlabeled samples into `cfg.cluster_k` pseudo-classes and
/// train `spec` against them. The spec's softmax width must equal the
/// cluster count.
pub fn pretrain_pseudo(
    spec: &NetworkSpec,
    unlabeled: &PatchSet,
    cfg: &TrainConfig,
    clusterer: &dyn Clusterer,
) -> Result<TrainedModel> {
    let classes = spec
        .softmax_classes()
        .ok_or_else(|| Error::Structure("pretraining needs a softmax tail".into()))?;
    if classes != cfg.cluster_k {
        return Err(Error::Structure(format!(
            "softmax width {classes} does not match cluster count {}",
            cfg.cluster_k
        )));
    }
    let pseudo = cluster_patches(unlabeled, cfg.cluster_k, cfg.seed, clusterer)?;
    let mut pseudo_set = unlabeled.clone();
    pseudo_set.labels = pseudo;

    super::train_supervised(spec, &pseudo_set, cfg)
}

/// Assemble trunk + new head and train on real labels with the first
/// `cfg.freeze_depth` parameterized trunk layers frozen. The pseudo-label
/// head never transfers; `freeze_depth == 0` trains the whole assembly.
/// Frozen parameters are bit-identical before and after.
pub fn finetune(
    pretrained: &TrainedModel,
    labeled: &PatchSet,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let (pre_spec, pre_params) = pretrained.single()?;
    let trunk = pre_spec.trunk();
    let trunk_len = trunk.layers.len();

    let head = parse_layer_seq(&cfg.finetune_head)?;
    match head.last() {
        Some(LayerSpec::Softmax { .. }) => {}
        _ => {
            return Err(Error::Structure(
                "the fine-tuning head must end in a softmax layer".into(),
            ))
        }
    }

    let mut assembled = trunk.clone();
    assembled.layers.extend(head);
    assembled.validate()?;
    check_labels(&assembled, labeled)?;

    let trunk_param_layers = trunk.parameterized_layers();
    if cfg.freeze_depth > trunk_param_layers.len() {
        return Err(Error::argument(format!(
            "freeze_depth {} exceeds the pretrained depth {}",
            cfg.freeze_depth,
            trunk_param_layers.len()
        )));
    }
    let frozen: Vec<usize> = trunk_param_layers[..cfg.freeze_depth].to_vec();
    let trainable: Vec<usize> = (0..assembled.layers.len())
        .filter(|i| !frozen.contains(i))
        .collect();

    // Transfer trunk weights; the new head takes fresh seeded values.
    let mut params = init_params(&assembled, cfg.seed)?;
    for i in 0..trunk_len {
        params.layers[i] = pre_params.layers[i].clone();
    }

    let frozen_checksum = params.checksum(&frozen);
    let mut params = params;
    let history = run_classifier_sgd(
        &assembled,
        &mut params,
        labeled,
        cfg,
        Some(&trainable),
        cfg.epochs,
    )?;
    debug_assert_eq!(params.checksum(&frozen), frozen_checksum);

    Ok(TrainedModel {
        arch: ModelArch::Single {
            spec: assembled,
            params,
        },
        history,
        provenance: Provenance {
            config_hash: cfg.hash(),
            seed: cfg.seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{extract_patches, synth_domain_pair, DomainTag, PatchSelection, SynthConfig};
    use crate::net::parse_config;
    use crate::train::{evaluate, train_supervised, FixedLabels, KMeans};

    fn synthetic_patches(seed: u64) -> PatchSet {
        let mut config = SynthConfig::identity(3, 14, 14, 10);
        config.noise_snr_db = Some(22.0);
        let pair = synth_domain_pair(&config, seed).unwrap();
        extract_patches(
            &pair.source.0,
            &pair.source.1,
            1,
            PatchSelection::All,
            DomainTag::Source,
        )
        .unwrap()
    }

    #[test]
    fn pseudo_head_width_must_match_cluster_count() {
        let set = synthetic_patches(0);
        let spec = parse_config("input-10 → fc-8 → softmax-4").unwrap();
        let cfg = TrainConfig {
            cluster_k: 6,
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(
            pretrain_pseudo(&spec, &set, &cfg, &KMeans::default()),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn pseudo_labels_equal_to_truth_reduce_to_supervised() {
        let set = synthetic_patches(1);
        let spec = parse_config("input-10 → fc-8 → softmax-3").unwrap();
        let cfg = TrainConfig {
            cluster_k: 3,
            epochs: 5,
            batch_size: 32,
            seed: 4,
            ..TrainConfig::default()
        };
        let fixed = FixedLabels(set.labels.clone());
        let pre = pretrain_pseudo(&spec, &set, &cfg, &fixed).unwrap();
        let sup = train_supervised(&spec, &set, &cfg).unwrap();
        assert_eq!(pre.history, sup.history);
        let (_, pa) = pre.single().unwrap();
        let (_, sa) = sup.single().unwrap();
        assert_eq!(pa, sa);
    }

    #[test]
    fn frozen_layers_are_bit_identical_after_finetuning() {
        let set = synthetic_patches(2);
        let spec = parse_config("input-10 → fc-12 → fc-8 → softmax-4").unwrap();
        let cfg = TrainConfig {
            cluster_k: 4,
            epochs: 4,
            batch_size: 32,
            seed: 7,
            freeze_depth: 2,
            finetune_head: "softmax-3".into(),
            ..TrainConfig::default()
        };
        let pre = pretrain_pseudo(&spec, &set, &cfg, &KMeans::default()).unwrap();

        let labeled = {
            let idx: Vec<usize> = (0..set.len()).step_by(9).collect();
            set.subset(&idx)
        };
        let tuned = finetune(&pre, &labeled, &cfg).unwrap();
        let (tuned_spec, tuned_params) = tuned.single().unwrap();
        let (_, pre_params) = pre.single().unwrap();

        // Layers 0 and 1 are the two dense trunk layers: frozen.
        for i in [0usize, 1] {
            assert_eq!(tuned_params.layers[i], pre_params.layers[i]);
        }
        assert_eq!(tuned_spec.softmax_classes(), Some(3));
    }

    #[test]
    fn freeze_depth_out_of_range_is_rejected() {
        let set = synthetic_patches(3);
        let spec = parse_config("input-10 → fc-8 → softmax-4").unwrap();
        let cfg = TrainConfig {
            cluster_k: 4,
            epochs: 1,
            seed: 0,
            freeze_depth: 5,
            finetune_head: "softmax-3".into(),
            ..TrainConfig::default()
        };
        let pre = pretrain_pseudo(&spec, &set, &cfg, &KMeans::default()).unwrap();
        assert!(matches!(
            finetune(&pre, &set, &cfg),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn pretrained_features_cluster_better_than_raw_spectra() {
        // Silhouette of the true classes, computed on raw spectra vs. on
        // trunk features after pseudo-label pretraining.
        let set = synthetic_patches(5);
        let spec = parse_config("input-10 → fc-12 → fc-6 → softmax-6").unwrap();
        let cfg = TrainConfig {
            cluster_k: 6,
            epochs: 25,
            batch_size: 32,
            learning_rate: 0.08,
            seed: 3,
            ..TrainConfig::default()
        };
        let pre = pretrain_pseudo(&spec, &set, &cfg, &KMeans::default()).unwrap();
        let (pspec, pparams) = pre.single().unwrap();
        let feats = crate::net::tap_features(
            pspec,
            pparams,
            &set,
            crate::net::TapPoint::Layer(1),
        )
        .unwrap();
        let feat_rows: Vec<Vec<f64>> = (0..set.len()).map(|i| feats.row(i).to_vec()).collect();

        let raw_s = silhouette(&set.patches, &set.labels);
        let feat_s = silhouette(&feat_rows, &set.labels);
        assert!(
            feat_s > raw_s,
            "silhouette did not improve: raw {raw_s:.3} vs features {feat_s:.3}"
        );
    }

    /// Mean silhouette score over a subsample (an independent measure of
    /// how well the representation separates the true classes).
    fn silhouette(rows: &[Vec<f64>], labels: &[u32]) -> f64 {
        let idx: Vec<usize> = (0..rows.len()).step_by(3).collect();
        let mut total = 0.0;
        let mut count = 0usize;
        for &i in &idx {
            let mut same = Vec::new();
            let mut by_class: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
            for &j in &idx {
                if i == j {
                    continue;
                }
                let d = crate::tensor::squared_distance(&rows[i], &rows[j]).sqrt();
                if labels[j] == labels[i] {
                    same.push(d);
                } else {
                    by_class.entry(labels[j]).or_default().push(d);
                }
            }
            if same.is_empty() || by_class.is_empty() {
                continue;
            }
            let a = same.iter().sum::<f64>() / same.len() as f64;
            let b = by_class
                .values()
                .map(|ds| ds.iter().sum::<f64>() / ds.len() as f64)
                .fold(f64::INFINITY, f64::min);
            total += (b - a) / a.max(b);
            count += 1;
        }
        total / count as f64
    }

    #[test]
    fn finetuning_beats_tiny_label_budget_alone() {
        // Five labels per class: the pretrained trunk should make the probe
        // at least as good as random-init fine-tuning in this smoke check.
        let set = synthetic_patches(8);
        let spec = parse_config("input-10 → fc-12 → fc-8 → softmax-6").unwrap();
        let cfg = TrainConfig {
            cluster_k: 6,
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.08,
            seed: 2,
            freeze_depth: 2,
            finetune_head: "softmax-3".into(),
            ..TrainConfig::default()
        };
        let pre = pretrain_pseudo(&spec, &set, &cfg, &KMeans::default()).unwrap();

        let split = crate::cube::split_labels(
            &{
                let mut config = SynthConfig::identity(3, 14, 14, 10);
                config.noise_snr_db = Some(22.0);
                let pair = synth_domain_pair(&config, 8).unwrap();
                pair.source.1
            },
            5,
            1,
        )
        .unwrap();
        let train = set.subset_by_pixel(14, &split.train_indices);
        let test = set.subset_by_pixel(14, &split.test_indices);

        let ft_cfg = TrainConfig {
            epochs: 60,
            ..cfg.clone()
        };
        let tuned = finetune(&pre, &train, &ft_cfg).unwrap();
        let oa = evaluate(&tuned, &test).unwrap().overall_accuracy;
        assert!(oa > 0.5, "fine-tuned accuracy only {oa}");
    }
}
