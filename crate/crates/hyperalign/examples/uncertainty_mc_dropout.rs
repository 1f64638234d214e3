//! Monte Carlo dropout uncertainty: average several stochastic passes and
//! split predictive entropy from model disagreement. Off-distribution
//! inputs should look more uncertain than training data.
//!
//! ```bash
//! cargo run --release --example uncertainty_mc_dropout
//! ```

use hyperalign::cube::{
    extract_patches, synth_domain_pair, DomainTag, PatchSelection, PatchSet, SynthConfig,
};
use hyperalign::net::{mc_forward, parse_config};
use hyperalign::train::{train_supervised, TrainConfig};
use rand::{Rng, SeedableRng};

fn main() -> hyperalign::Result<()> {
    let mut config = SynthConfig::default_task();
    config.noise_snr_db = Some(20.0);
    let pair = synth_domain_pair(&config, 5)?;
    let all = extract_patches(
        &pair.source.0,
        &pair.source.1,
        1,
        PatchSelection::All,
        DomainTag::Source,
    )?;

    let spec = parse_config("input-48 → fc-24 → dropout-0.5 → fc-16 → softmax-6")?;
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 16,
        learning_rate: 0.1,
        seed: 1,
        ..TrainConfig::default()
    };
    let model = train_supervised(&spec, &all, &cfg)?;
    let (mspec, mparams) = model.single()?;

    let on_manifold = all.subset(&(0..20).collect::<Vec<_>>());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let off_manifold = PatchSet {
        window: 1,
        bands: 48,
        patches: (0..20)
            .map(|_| (0..48).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect(),
        labels: vec![0; 20],
        origin_coords: (0..20).map(|i| (0, i)).collect(),
        domain: DomainTag::Source,
    };

    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    for (name, set) in [("training inputs", &on_manifold), ("random inputs", &off_manifold)] {
        let mc = mc_forward(mspec, mparams, set, 32, 4)?;
        println!(
            "{name}: median entropy {:.3} nats, median disagreement {:.4}",
            median(mc.entropy.clone()),
            median(mc.mutual_info.clone()),
        );
    }

    // Without stochasticity the disagreement vanishes identically.
    let det_spec = parse_config("input-48 → fc-24 → dropout-0.0 → fc-16 → softmax-6")?;
    let det_model = train_supervised(&det_spec, &all, &cfg)?;
    let (dspec, dparams) = det_model.single()?;
    let mc = mc_forward(dspec, dparams, &on_manifold, 32, 4)?;
    println!(
        "rate 0: every disagreement is exactly zero: {}",
        mc.mutual_info.iter().all(|&m| m == 0.0)
    );
    Ok(())
}
