//! Mini-batch stochastic gradient descent on categorical cross entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::PatchSet;
use crate::error::{Error, Result};
use crate::net::{backward, forward, init_params, sample_tensor, DropoutMode, NetworkSpec, ParamStore};
use crate::tensor::Tensor;

use super::{EpochRecord, ModelArch, Provenance, TrainConfig, TrainedModel};

/// Train a softmax-tailed network on labeled patches. Deterministic per
/// (config, seed, data); `epochs == 0` returns the untouched initialization
/// with an empty history.
pub fn train_supervised(
    spec: &NetworkSpec,
    labeled: &PatchSet,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    check_labels(spec, labeled)?;
    let mut params = init_params(spec, cfg.seed)?;
    let history = run_classifier_sgd(spec, &mut params, labeled, cfg, None, cfg.epochs)?;
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

pub(crate) fn check_labels(spec: &NetworkSpec, labeled: &PatchSet) -> Result<()> {
    if labeled.is_empty() {
        return Err(Error::argument("the labeled set is empty"));
    }
    let classes = spec
        .softmax_classes()
        .ok_or_else(|| Error::Structure("training needs a softmax tail".into()))?;
    if let Some(&max) = labeled.labels.iter().max() {
        if max as usize > classes {
            return Err(Error::Structure(format!(
                "labels go up to {max} but the softmax has {classes} classes"
            )));
        }
    }
    if labeled.labels.iter().any(|&l| l == 0) {
        return Err(Error::argument(
            "supervised training takes labeled samples only (label 0 found)",
        ));
    }
    if spec.input_bands != labeled.bands || spec.input_window != labeled.window {
        return Err(Error::Shape {
            layer: "input".into(),
            msg: format!(
                "spec expects window {} x bands {}, set has window {} x bands {}",
                spec.input_window, spec.input_bands, labeled.window, labeled.bands
            ),
        });
    }
    Ok(())
}

/// Cross-entropy loss and its gradient with respect to the probabilities.
pub(crate) fn cross_entropy_grad(probs: &[f64], label: u32) -> (f64, Vec<f64>) {
    let c = label as usize - 1;
    let p = probs[c].max(1e-12);
    let mut grad = vec![0.0; probs.len()];
    grad[c] = -1.0 / p;
    (-p.ln(), grad)
}

/// The shared epoch loop: shuffle, walk mini-batches, average gradients,
/// step. `trainable` restricts updates to the given layer ids (fine-tuning
/// with frozen trunks); None trains everything.
pub(crate) fn run_classifier_sgd(
    spec: &NetworkSpec,
    params: &mut ParamStore,
    labeled: &PatchSet,
    cfg: &TrainConfig,
    trainable: Option<&[usize]>,
    epochs: usize,
) -> Result<Vec<EpochRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(epochs);
    let n = labeled.len();

    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let sample = sample_tensor(labeled, i);
                let pass = forward(spec, params, &sample, DropoutMode::Sample(&mut rng))?;
                let (loss, d_probs) = cross_entropy_grad(&pass.output().data, labeled.labels[i]);
                batch_loss += loss;
                let d_out = Tensor::from_vec(&pass.output().dims, d_probs);
                let (g, _) = backward(spec, params, &pass, &d_out, &[])?;
                grads.accumulate(&g, 1.0 / batch.len() as f64);
            }
            params.sgd_step(&grads, cfg.learning_rate, trainable);
            epoch_loss += batch_loss;
        }

        let mean = epoch_loss / n as f64;
        history.push(EpochRecord {
            epoch,
            components: vec![("total".into(), mean), ("ce".into(), mean)],
        });
    }
    Ok(history)
}
