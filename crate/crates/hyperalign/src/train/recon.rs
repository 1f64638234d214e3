//! Reconstruction-regularized semi-supervision: categorical cross entropy
//! on the labeled samples plus a mean-squared reconstruction penalty --
//! through a mirrored decoder off the trunk -- on labeled and unlabeled
//! samples alike. The reconstruction term acts as a regularizer learned
//! from data the label budget never touches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::PatchSet;
use crate::error::{Error, Result};
use crate::net::{
    backward, decoder_hints, forward, forward_with_hints, init_params, mirrored_decoder,
    sample_tensor, DropoutMode, NetworkSpec,
};
use crate::tensor::Tensor;

use super::supervised::{check_labels, cross_entropy_grad};
use super::{EpochRecord, ModelArch, Provenance, TrainConfig, TrainedModel};

/// Joint loss `ce(labeled) + lambda_recon * mse(labeled ∪ unlabeled)`.
/// Both components are logged separately every epoch. With
/// `lambda_recon == 0` this is exactly `train_supervised` on the labeled
/// subset (identical trajectory for the same seed); recurrent trunks are
/// rejected because the decoder cannot mirror them.
pub fn train_semisup_recon(
    spec: &NetworkSpec,
    labeled: &PatchSet,
    unlabeled: &PatchSet,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    if spec.has_recurrent() {
        return Err(Error::UnsupportedStructure(
            "reconstruction training mirrors the trunk; recurrent trunks are not mirrorable"
                .into(),
        ));
    }
    if cfg.lambda_recon < 0.0 {
        return Err(Error::argument("lambda_recon must be nonnegative"));
    }
    check_labels(spec, labeled)?;

    if cfg.lambda_recon == 0.0 {
        // Exact reduction: the reconstruction machinery must not even
        // consume randomness, or trajectories would diverge from the
        // supervised baseline.
        let mut model = super::train_supervised(spec, labeled, cfg)?;
        for record in &mut model.history {
            record.components.push(("recon".into(), 0.0));
        }
        return Ok(model);
    }

    let trunk = spec.trunk();
    let trunk_len = trunk.layers.len();
    let decoder = mirrored_decoder(&trunk)?;
    let hints = decoder_hints(&trunk);

    let mut params = init_params(spec, cfg.seed)?;
    let mut dec_params = init_params(&decoder, cfg.seed.wrapping_add(1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n_lab = labeled.len();
    let n_unl = unlabeled.len();
    let n_all = n_lab + n_unl;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        // One walk over labeled ∪ unlabeled; index >= n_lab means unlabeled.
        let mut order: Vec<usize> = (0..n_all).collect();
        order.shuffle(&mut rng);

        let mut ce_sum = 0.0;
        let mut recon_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            let mut dec_grads = dec_params.zeros_like();
            // The two loss terms normalize independently: cross entropy
            // averages over the labeled samples present, reconstruction
            // over the whole batch. Without this, a large unlabeled pool
            // would dilute the supervision no matter how small the
            // reconstruction weight is.
            let labeled_in_batch = batch.iter().filter(|&&idx| idx < n_lab).count().max(1);
            let ce_scale = batch.len() as f64 / labeled_in_batch as f64;
            for &idx in batch {
                let (set, i, is_labeled) = if idx < n_lab {
                    (labeled, idx, true)
                } else {
                    (unlabeled, idx - n_lab, false)
                };
                let sample = sample_tensor(set, i);
                let pass = forward(spec, &params, &sample, DropoutMode::Sample(&mut rng))?;

                // Reconstruction branch from the deepest trunk activation.
                let trunk_act = &pass.activations[trunk_len];
                let mut mode = DropoutMode::Off;
                let dec_pass =
                    forward_with_hints(&decoder, &dec_params, trunk_act, &mut mode, &hints)?;
                let recon = dec_pass.output();
                let m = recon.numel() as f64;
                let mut mse = 0.0;
                let mut d_recon = Tensor::zeros(&recon.dims);
                for (k, (r, x)) in recon.data.iter().zip(&sample.data).enumerate() {
                    let diff = r - x;
                    mse += diff * diff;
                    d_recon.data[k] = cfg.lambda_recon * 2.0 * diff / m;
                }
                mse /= m;
                recon_sum += mse;

                let (dec_g, d_trunk) = backward(&decoder, &dec_params, &dec_pass, &d_recon, &[])?;
                dec_grads.accumulate(&dec_g, 1.0 / batch.len() as f64);

                // Classification branch (labeled samples only), with the
                // reconstruction gradient injected at the trunk output.
                let d_out = if is_labeled {
                    let (loss, mut d_probs) =
                        cross_entropy_grad(&pass.output().data, set.labels[i]);
                    ce_sum += loss;
                    for d in &mut d_probs {
                        *d *= ce_scale;
                    }
                    Tensor::from_vec(&pass.output().dims, d_probs)
                } else {
                    Tensor::zeros(&pass.output().dims)
                };
                let injected = vec![(trunk_len - 1, d_trunk)];
                let (g, _) = backward(spec, &params, &pass, &d_out, &injected)?;
                grads.accumulate(&g, 1.0 / batch.len() as f64);
            }
            params.sgd_step(&grads, cfg.learning_rate, None);
            dec_params.sgd_step(&dec_grads, cfg.learning_rate, None);
        }

        let ce = ce_sum / n_lab.max(1) as f64;
        let recon = recon_sum / n_all as f64;
        history.push(EpochRecord {
            epoch,
            components: vec![
                ("total".into(), ce + cfg.lambda_recon * recon),
                ("ce".into(), ce),
                ("recon".into(), recon),
            ],
        });
    }

    Ok(TrainedModel {
        arch: ModelArch::Single {
            spec: spec.clone(),
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
    use crate::cube::DomainTag;
    use crate::net::parse_config;
    use crate::train::train_supervised;

    fn toy_sets(seed: u64) -> (PatchSet, PatchSet) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let make = |rng: &mut ChaCha8Rng, n: usize, labeled: bool| -> PatchSet {
            let mut patches = Vec::new();
            let mut labels = Vec::new();
            for i in 0..n {
                let class = if i % 2 == 0 { 1u32 } else { 2 };
                let center = if class == 1 { 0.3 } else { 0.7 };
                patches.push(
                    (0..5)
                        .map(|_| (center + rng.gen_range(-0.05..0.05f64)).clamp(0.0, 1.0))
                        .collect(),
                );
                labels.push(if labeled { class } else { 0 });
            }
            PatchSet {
                window: 1,
                bands: 5,
                patches,
                labels,
                origin_coords: (0..n).map(|i| (0, i)).collect(),
                domain: DomainTag::Source,
            }
        };
        (make(&mut rng, 12, true), make(&mut rng, 24, false))
    }

    #[test]
    fn lambda_zero_reduces_to_supervised_exactly() {
        let (labeled, unlabeled) = toy_sets(4);
        let spec = parse_config("input-5 → fc-6 → softmax-2").unwrap();
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 4,
            learning_rate: 0.05,
            seed: 11,
            lambda_recon: 0.0,
            ..TrainConfig::default()
        };
        let joint = train_semisup_recon(&spec, &labeled, &unlabeled, &cfg).unwrap();
        let sup = train_supervised(&spec, &labeled, &cfg).unwrap();
        for (a, b) in joint.history.iter().zip(&sup.history) {
            assert_eq!(a.total(), b.total());
            assert_eq!(a.component("recon"), Some(0.0));
        }
        let (_, pa) = joint.single().unwrap();
        let (_, pb) = sup.single().unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn recurrent_specs_are_unsupported() {
        let (labeled, unlabeled) = toy_sets(0);
        let spec = parse_config("input-5 → recur-4 → softmax-2").unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train_semisup_recon(&spec, &labeled, &unlabeled, &cfg),
            Err(Error::UnsupportedStructure(_))
        ));
    }

    #[test]
    fn reconstruction_of_constant_inputs_approaches_zero() {
        // Identity-capacity trunk (fc-5 over 5 inputs) on constant samples.
        let mut labeled = toy_sets(1).0;
        for p in &mut labeled.patches {
            for v in p.iter_mut() {
                *v = 0.5;
            }
        }
        let unlabeled = PatchSet {
            labels: vec![0; labeled.len()],
            ..labeled.clone()
        };
        let spec = parse_config("input-5 → fc-5 → softmax-2").unwrap();
        let cfg = TrainConfig {
            epochs: 150,
            batch_size: 24,
            learning_rate: 0.2,
            seed: 2,
            lambda_recon: 1.0,
            ..TrainConfig::default()
        };
        let model = train_semisup_recon(&spec, &labeled, &unlabeled, &cfg).unwrap();
        let final_recon = model.history.last().unwrap().component("recon").unwrap();
        assert!(final_recon < 1e-3, "reconstruction stuck at {final_recon}");
    }

    #[test]
    fn heavy_reconstruction_weight_dominates_classification() {
        let (labeled, unlabeled) = toy_sets(9);
        let spec = parse_config("input-5 → fc-4 → softmax-2").unwrap();
        let base = TrainConfig {
            epochs: 40,
            batch_size: 6,
            learning_rate: 0.05,
            seed: 3,
            ..TrainConfig::default()
        };
        let light = train_semisup_recon(
            &spec,
            &labeled,
            &unlabeled,
            &TrainConfig {
                lambda_recon: 0.0,
                ..base.clone()
            },
        )
        .unwrap();
        let heavy = train_semisup_recon(
            &spec,
            &labeled,
            &unlabeled,
            &TrainConfig {
                lambda_recon: 100.0,
                ..base
            },
        )
        .unwrap();
        let ce_light = light.history.last().unwrap().component("ce").unwrap();
        let ce_heavy = heavy.history.last().unwrap().component("ce").unwrap();
        assert!(
            ce_heavy > ce_light,
            "classification should plateau higher under a dominant reconstruction term: \
             {ce_heavy} vs {ce_light}"
        );
    }
}
