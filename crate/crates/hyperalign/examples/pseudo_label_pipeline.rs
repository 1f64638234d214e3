//! Semi-supervised pretraining on cluster-derived pseudo-labels, then
//! fine-tuning a fresh head on a handful of real labels. Compares against
//! fine-tuning the same architecture from a random initialization and
//! sweeps the frozen depth.
//!
//! ```bash
//! cargo run --release --example pseudo_label_pipeline
//! ```

use hyperalign::cube::{
    extract_patches, split_labels, synth_domain_pair, DomainTag, MixingConfig, PatchSelection,
    SynthConfig,
};
use hyperalign::net::{init_params, parse_config};
use hyperalign::train::{
    evaluate, finetune, pretrain_pseudo, KMeans, ModelArch, Provenance, TrainConfig, TrainedModel,
};

fn main() -> hyperalign::Result<()> {
    let mut config = SynthConfig::default_task();
    config.noise_snr_db = Some(12.0);
    config.amplitude_range = (0.1, 0.32);
    config.mixing = Some(MixingConfig {
        fraction: 0.45,
        concentration: 1.0,
    });
    let pair = synth_domain_pair(&config, 21)?;
    let (cube, labels) = &pair.source;
    let all = extract_patches(cube, labels, 1, PatchSelection::All, DomainTag::Source)?;
    let split = split_labels(labels, 5, 1)?;
    let train = all.subset_by_pixel(labels.width(), &split.train_indices);
    let test = all.subset_by_pixel(labels.width(), &split.test_indices);
    let mut unlabeled = all.clone();
    for l in &mut unlabeled.labels {
        *l = 0;
    }
    println!(
        "{} unlabeled samples for pretraining, {} labeled for fine-tuning",
        unlabeled.len(),
        train.len()
    );

    // Over-clustered pseudo-labels (9 clusters over 6 classes) drive the
    // trunk; the pseudo head is discarded at fine-tune time.
    let spec = parse_config("input-48 → fc-40 → fc-32 → fc-24 → fc-16 → softmax-9")?;
    let pre_cfg = TrainConfig {
        epochs: 30,
        batch_size: 32,
        learning_rate: 0.08,
        seed: 1,
        cluster_k: 9,
        ..TrainConfig::default()
    };
    let pretrained = pretrain_pseudo(&spec, &unlabeled, &pre_cfg, &KMeans::default())?;
    println!(
        "pretraining loss {:.3} -> {:.3}",
        pretrained.history.first().unwrap().total(),
        pretrained.history.last().unwrap().total()
    );

    let tune = |model: &TrainedModel, depth: usize| -> hyperalign::Result<f64> {
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 16,
            learning_rate: 0.1,
            seed: 1,
            freeze_depth: depth,
            finetune_head: "softmax-6".into(),
            ..TrainConfig::default()
        };
        let tuned = finetune(model, &train, &cfg)?;
        Ok(evaluate(&tuned, &test)?.overall_accuracy)
    };

    println!("\nfrozen pretrained depth sweep (5 labels/class):");
    for depth in 1..=4 {
        println!("  depth {depth}: test OA {:.3}", tune(&pretrained, depth)?);
    }

    let random = TrainedModel {
        arch: ModelArch::Single {
            spec: spec.clone(),
            params: init_params(&spec, 1)?,
        },
        history: Vec::new(),
        provenance: Provenance {
            config_hash: String::new(),
            seed: 1,
        },
    };
    println!("random-init trunk, depth 4: test OA {:.3}", tune(&random, 4)?);
    Ok(())
}
