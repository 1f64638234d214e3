//! Train a supervised classifier on synthetic spectra and report accuracy.
//!
//! ```bash
//! cargo run --release --example supervised_baseline
//! ```

use hyperalign::cube::{
    extract_patches, split_labels, synth_domain_pair, DomainTag, PatchSelection, SynthConfig,
};
use hyperalign::net::parse_config;
use hyperalign::train::{evaluate, format_mean_std, train_supervised, TrainConfig};

fn main() -> hyperalign::Result<()> {
    let pair = synth_domain_pair(&SynthConfig::default_task(), 11)?;
    let (cube, labels) = &pair.source;
    let all = extract_patches(cube, labels, 1, PatchSelection::All, DomainTag::Source)?;
    let split = split_labels(labels, 20, 0)?;
    let train = all.subset_by_pixel(labels.width(), &split.train_indices);
    let test = all.subset_by_pixel(labels.width(), &split.test_indices);

    let spec = parse_config("input-48 → fc-24 → fc-16 → softmax-6")?;
    let mut accuracies = Vec::new();
    for seed in 1..=3 {
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.1,
            seed,
            ..TrainConfig::default()
        };
        let model = train_supervised(&spec, &train, &cfg)?;
        let report = evaluate(&model, &test)?;
        println!(
            "seed {seed}: loss {:.3} -> {:.3}, test OA {:.3}",
            model.history.first().unwrap().total(),
            model.history.last().unwrap().total(),
            report.overall_accuracy
        );
        accuracies.push(report.overall_accuracy);
    }
    println!("overall accuracy: {}", format_mean_std(&accuracies));
    Ok(())
}
