//! Reconstruction-regularized semi-supervision: cross entropy on the few
//! labeled samples plus a mirrored-decoder mean-squared reconstruction
//! term on everything.
//!
//! ```bash
//! cargo run --release --example reconstruction_semisup
//! ```

use hyperalign::cube::{
    extract_patches, split_labels, synth_domain_pair, DomainTag, PatchSelection, SynthConfig,
};
use hyperalign::net::{decoder_hints, mirrored_decoder, parse_config};
use hyperalign::train::{evaluate, train_semisup_recon, TrainConfig};

fn main() -> hyperalign::Result<()> {
    let mut config = SynthConfig::default_task();
    config.noise_snr_db = Some(14.0);
    let pair = synth_domain_pair(&config, 13)?;
    let (cube, labels) = &pair.source;
    let all = extract_patches(cube, labels, 1, PatchSelection::All, DomainTag::Source)?;
    let split = split_labels(labels, 5, 2)?;
    let train = all.subset_by_pixel(labels.width(), &split.train_indices);
    let test = all.subset_by_pixel(labels.width(), &split.test_indices);
    let mut unlabeled = all.clone();
    for l in &mut unlabeled.labels {
        *l = 0;
    }

    let spec = parse_config("input-48 → fc-24 → fc-12 → softmax-6")?;
    println!(
        "decoder mirrors the trunk: {}",
        hyperalign::net::render_config(&mirrored_decoder(&spec.trunk())?)
    );
    println!("upsample hints (none for a flat trunk): {:?}", decoder_hints(&spec.trunk()));

    // lambda 0 delegates to the plain supervised loop on the labeled
    // subset; positive weights walk the whole unlabeled pool each epoch
    // with the reconstruction term as a regularizer. Both components are
    // logged separately every epoch.
    for lambda in [0.0, 0.1, 10.0] {
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 24,
            learning_rate: 0.08,
            seed: 3,
            lambda_recon: lambda,
            ..TrainConfig::default()
        };
        let model = train_semisup_recon(&spec, &train, &unlabeled, &cfg)?;
        let last = model.history.last().unwrap();
        let report = evaluate(&model, &test)?;
        println!(
            "lambda {lambda}: ce {:.3}, recon {:.4}, test OA {:.3}",
            last.component("ce").unwrap(),
            last.component("recon").unwrap(),
            report.overall_accuracy
        );
    }
    Ok(())
}
