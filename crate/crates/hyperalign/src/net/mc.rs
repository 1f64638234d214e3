//! Monte Carlo dropout inference: average the class probabilities of
//! several stochastic passes and decompose the predictive uncertainty into
//! total entropy and the mutual information between prediction and mask.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::PatchSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::forward::{forward, sample_tensor, DropoutMode};
use super::params::ParamStore;
use super::NetworkSpec;

/// Per-sample outcome of repeated stochastic passes.
#[derive(Debug, Clone)]
pub struct McOutcome {
    /// Mean class probabilities over passes, one row per sample.
    pub mean_probs: Tensor,
    /// Predictive entropy H(mean) per sample, in nats.
    pub entropy: Vec<f64>,
    /// H(mean) - mean per-pass entropy, per sample. Nonnegative up to
    /// rounding; exactly 0.0 when passes cannot differ (one pass, or every
    /// dropout rate zero).
    pub mutual_info: Vec<f64>,
}

/// Run `passes` stochastic forward evaluations with fresh dropout masks per
/// pass and aggregate. The spec must contain at least one dropout layer --
/// without it the posterior collapses and the "Bayesian" reading is
/// meaningless -- and `passes` must be at least 1.
pub fn mc_forward(
    spec: &NetworkSpec,
    params: &ParamStore,
    set: &PatchSet,
    passes: usize,
    seed: u64,
) -> Result<McOutcome> {
    if passes < 1 {
        return Err(Error::argument("mc_forward needs at least one pass"));
    }
    if !spec.has_dropout() {
        return Err(Error::argument(
            "mc_forward needs a dropout-bearing spec; add dropout layers after the convolutions",
        ));
    }
    let classes = spec
        .softmax_classes()
        .ok_or_else(|| Error::Structure("mc_forward needs a softmax tail".into()))?;

    // With every rate at zero the passes are bit-identical; one pass gives
    // the exact answer and a mutual information of exactly zero.
    let stochastic = spec.layers.iter().any(|l| match l {
        super::LayerSpec::Dropout { rate } => *rate > 0.0,
        _ => false,
    });
    let effective_passes = if stochastic { passes } else { 1 };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = set.len();
    let mut mean_probs = Tensor::zeros(&[n, classes]);
    let mut pass_entropy_sum = vec![0.0; n];

    for i in 0..n {
        let sample = sample_tensor(set, i);
        let mut acc = vec![0.0; classes];
        for _ in 0..effective_passes {
            let pass = forward(spec, params, &sample, DropoutMode::Sample(&mut rng))?;
            let p = &pass.output().data;
            for (a, v) in acc.iter_mut().zip(p) {
                *a += v;
            }
            pass_entropy_sum[i] += entropy(p);
        }
        for (m, a) in mean_probs.row_mut(i).iter_mut().zip(&acc) {
            *m = a / effective_passes as f64;
        }
    }

    let mut h = Vec::with_capacity(n);
    let mut mi = Vec::with_capacity(n);
    for i in 0..n {
        let h_mean = entropy(mean_probs.row(i));
        let h_passes = pass_entropy_sum[i] / effective_passes as f64;
        h.push(h_mean);
        mi.push(if effective_passes == 1 {
            0.0
        } else {
            h_mean - h_passes
        });
    }

    Ok(McOutcome {
        mean_probs,
        entropy: h,
        mutual_info: mi,
    })
}

/// Shannon entropy in nats; zero probabilities contribute nothing.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{DomainTag, PatchSet};
    use crate::net::{init_params, parse_config};

    fn spectra_set(rows: Vec<Vec<f64>>) -> PatchSet {
        let n = rows.len();
        PatchSet {
            window: 1,
            bands: rows[0].len(),
            patches: rows,
            labels: vec![0; n],
            origin_coords: (0..n).map(|i| (0, i)).collect(),
            domain: DomainTag::Source,
        }
    }

    #[test]
    fn zero_rate_gives_exactly_zero_mutual_information() {
        let spec = parse_config("input-4 → fc-6 → dropout-0.0 → softmax-3").unwrap();
        let params = init_params(&spec, 1).unwrap();
        let set = spectra_set(vec![vec![0.2, 0.4, 0.1, 0.9], vec![0.5, 0.5, 0.5, 0.5]]);
        let out = mc_forward(&spec, &params, &set, 16, 7).unwrap();
        assert!(out.mutual_info.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn single_pass_gives_exactly_zero_mutual_information() {
        let spec = parse_config("input-4 → fc-6 → dropout-0.5 → softmax-3").unwrap();
        let params = init_params(&spec, 1).unwrap();
        let set = spectra_set(vec![vec![0.2, 0.4, 0.1, 0.9]]);
        let out = mc_forward(&spec, &params, &set, 1, 7).unwrap();
        assert_eq!(out.mutual_info, vec![0.0]);
    }

    #[test]
    fn mutual_information_is_never_meaningfully_negative() {
        let spec = parse_config("input-5 → fc-8 → dropout-0.5 → fc-6 → softmax-4").unwrap();
        let params = init_params(&spec, 2).unwrap();
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| (0..5).map(|b| ((i * 5 + b) as f64 * 0.61).sin().abs()).collect())
            .collect();
        let set = spectra_set(rows);
        let out = mc_forward(&spec, &params, &set, 24, 3).unwrap();
        for &m in &out.mutual_info {
            assert!(m >= -1e-9, "mutual information {m} below tolerance");
        }
        // With a substantial rate and many passes there is real disagreement.
        assert!(out.mutual_info.iter().any(|&m| m > 0.0));
    }

    #[test]
    fn off_manifold_inputs_carry_more_entropy_than_training_inputs() {
        use crate::cube::{extract_patches, synth_domain_pair, PatchSelection, SynthConfig};
        use crate::train::{train_supervised, TrainConfig};
        use rand::Rng;

        let mut config = SynthConfig::identity(3, 14, 14, 8);
        config.noise_snr_db = Some(22.0);
        let pair = synth_domain_pair(&config, 6).unwrap();
        let all = extract_patches(
            &pair.source.0,
            &pair.source.1,
            1,
            PatchSelection::All,
            DomainTag::Source,
        )
        .unwrap();
        let spec = parse_config("input-8 → fc-12 → dropout-0.5 → fc-8 → softmax-3").unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.1,
            seed: 1,
            ..TrainConfig::default()
        };
        let model = train_supervised(&spec, &all, &cfg).unwrap();
        let (mspec, mparams) = model.single().unwrap();

        let training = all.subset(&(0..20).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let random = spectra_set(
            (0..20)
                .map(|_| (0..8).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect(),
        );
        let median = |mut v: Vec<f64>| -> f64 {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let on = mc_forward(mspec, mparams, &training, 32, 5).unwrap();
        let off = mc_forward(mspec, mparams, &random, 32, 5).unwrap();
        assert!(
            median(off.entropy) > median(on.entropy),
            "random inputs should look less certain than training inputs"
        );
    }

    #[test]
    fn passes_below_one_are_rejected() {
        let spec = parse_config("input-4 → dropout-0.5 → softmax-2").unwrap();
        let params = init_params(&spec, 0).unwrap();
        let set = spectra_set(vec![vec![0.0; 4]]);
        assert!(mc_forward(&spec, &params, &set, 0, 0).is_err());
    }

    #[test]
    fn dropout_free_spec_is_rejected() {
        let spec = parse_config("input-4 → fc-3 → softmax-2").unwrap();
        let params = init_params(&spec, 0).unwrap();
        let set = spectra_set(vec![vec![0.0; 4]]);
        assert!(matches!(
            mc_forward(&spec, &params, &set, 4, 0),
            Err(Error::Argument(_))
        ));
    }
}
