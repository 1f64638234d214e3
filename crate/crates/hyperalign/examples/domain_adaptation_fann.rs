//! Dual-branch domain adaptation on a shifted scene pair: per-layer
//! feature alignment with an automatically estimated trade-off weight, a
//! fused classification head, per-layer probes, and the source-only
//! baseline for contrast.
//!
//! ```bash
//! cargo run --release --example domain_adaptation_fann
//! ```

use hyperalign::cube::{
    extract_patches, split_labels, synth_domain_pair, DomainTag, PatchSelection, SynthConfig,
};
use hyperalign::net::{parse_config, FannSpec, LayerSpec};
use hyperalign::train::{
    evaluate, layer_probe, train_fann, train_supervised, ProbePoint, TrainConfig,
};

fn main() -> hyperalign::Result<()> {
    let config = SynthConfig::default_task();
    let pair = synth_domain_pair(&config, 101)?;
    let (s_cube, s_labels) = &pair.source;
    let (t_cube, t_labels) = &pair.target;

    let s_all = extract_patches(s_cube, s_labels, 1, PatchSelection::All, DomainTag::Source)?;
    let t_all = extract_patches(t_cube, t_labels, 1, PatchSelection::All, DomainTag::Target)?;
    let s_split = split_labels(s_labels, 40, 1)?;
    let t_split = split_labels(t_labels, 5, 2)?;
    let s_train = s_all.subset_by_pixel(s_labels.width(), &s_split.train_indices);
    let t_train = t_all.subset_by_pixel(t_labels.width(), &t_split.train_indices);
    let t_test = t_all.subset_by_pixel(t_labels.width(), &t_split.test_indices);
    println!(
        "labels: {} source, {} target; {} target test pixels",
        s_train.len(),
        t_train.len(),
        t_test.len()
    );

    let branch = parse_config("input-48 → fc-32 → fc-24")?;
    let spec = FannSpec::new(
        branch.clone(),
        branch,
        vec![(0, 0), (1, 1)],
        16,
        vec![LayerSpec::Softmax { classes: 6 }],
    )?;
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 24,
        learning_rate: 0.05,
        seed: 1,
        beta_refresh: 5,
        ..TrainConfig::default()
    };
    let fann = train_fann(&spec, &s_train, &t_train, &cfg)?;
    let last = fann.history.last().unwrap();
    println!(
        "final epoch: ce {:.3}, alignment ({:.3}, {:.3}), trade-off weights ({:.2}, {:.2})",
        last.component("ce").unwrap(),
        last.component("align_1").unwrap(),
        last.component("align_2").unwrap(),
        last.component("beta_1").unwrap(),
        last.component("beta_2").unwrap(),
    );

    let fann_oa = evaluate(&fann, &t_test)?.overall_accuracy;

    let base_spec = parse_config("input-48 → fc-32 → fc-24 → softmax-6")?;
    let baseline = train_supervised(&base_spec, &s_train, &cfg)?;
    let base_oa = evaluate(&baseline, &t_test)?.overall_accuracy;
    println!("\ntarget-test OA: adaptation {fann_oa:.3} vs source-only baseline {base_oa:.3}");

    println!("\nper-layer probes (softmax fit on aligned features):");
    for p in 0..2 {
        let oa = layer_probe(&fann, ProbePoint::Pair(p), &s_train, &t_train, &t_test, &cfg)?;
        println!("  FA-{}: {oa:.3}", p + 1);
    }
    let oa = layer_probe(&fann, ProbePoint::Concatenated, &s_train, &t_train, &t_test, &cfg)?;
    println!("  concatenated: {oa:.3}");
    Ok(())
}
