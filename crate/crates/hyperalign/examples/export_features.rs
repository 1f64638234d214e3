//! Export latent features for external embedding tools: train a small
//! adaptation model, write its concatenated latents plus the raw spectra
//! as CSV, and show that alignment shrank the cross-domain class gap.
//!
//! ```bash
//! cargo run --release --example export_features
//! ```

use hyperalign::cube::{
    extract_patches, split_labels, synth_domain_pair, DomainTag, PatchSelection, PatchSet,
    SynthConfig,
};
use hyperalign::net::{parse_config, FannSpec, LayerSpec};
use hyperalign::tensor::Tensor;
use hyperalign::train::{fann_features, train_fann, ProbePoint, TrainConfig};

fn mean_same_class_cross_domain_distance(
    s_rows: &Tensor,
    s_labels: &[u32],
    t_rows: &Tensor,
    t_labels: &[u32],
) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..s_rows.dims[0] {
        for j in 0..t_rows.dims[0] {
            if s_labels[i] == t_labels[j] {
                let d: f64 = s_rows
                    .row(i)
                    .iter()
                    .zip(t_rows.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                total += d.sqrt();
                count += 1;
            }
        }
    }
    total / count as f64
}

fn as_matrix(set: &PatchSet) -> Tensor {
    let flat: Vec<f64> = set.patches.iter().flatten().copied().collect();
    Tensor::from_vec(&[set.len(), set.patch_len()], flat)
}

fn main() -> hyperalign::Result<()> {
    let config = SynthConfig::default_task();
    let pair = synth_domain_pair(&config, 17)?;
    let s_all = extract_patches(&pair.source.0, &pair.source.1, 1, PatchSelection::All, DomainTag::Source)?;
    let t_all = extract_patches(&pair.target.0, &pair.target.1, 1, PatchSelection::All, DomainTag::Target)?;
    let s_split = split_labels(&pair.source.1, 40, 1)?;
    let t_split = split_labels(&pair.target.1, 5, 2)?;
    let s_train = s_all.subset_by_pixel(pair.source.1.width(), &s_split.train_indices);
    let t_train = t_all.subset_by_pixel(pair.target.1.width(), &t_split.train_indices);

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
        ..TrainConfig::default()
    };
    let model = train_fann(&spec, &s_train, &t_train, &cfg)?;
    let (fspec, fparams) = model.fann()?;

    // Subsample both domains for export.
    let s_sub = s_all.subset(&(0..s_all.len()).step_by(4).collect::<Vec<_>>());
    let t_sub = t_all.subset(&(0..t_all.len()).step_by(4).collect::<Vec<_>>());
    let s_latent = fann_features(fspec, fparams, &s_sub, ProbePoint::Concatenated)?;
    let t_latent = fann_features(fspec, fparams, &t_sub, ProbePoint::Concatenated)?;

    let raw_gap = mean_same_class_cross_domain_distance(
        &as_matrix(&s_sub),
        &s_sub.labels,
        &as_matrix(&t_sub),
        &t_sub.labels,
    );
    let latent_gap =
        mean_same_class_cross_domain_distance(&s_latent, &s_sub.labels, &t_latent, &t_sub.labels);
    println!("mean same-class cross-domain distance:");
    println!("  raw spectra:  {raw_gap:.4}");
    println!("  latent space: {latent_gap:.4}");

    // CSV for external embedding (these rows feed t-SNE-style tools).
    let out = std::env::temp_dir().join("hyperalign-latent-features.csv");
    let mut csv = String::from("domain,label");
    for k in 0..s_latent.dims[1] {
        csv.push_str(&format!(",f{k}"));
    }
    csv.push('\n');
    for (set, latent) in [(&s_sub, &s_latent), (&t_sub, &t_latent)] {
        for i in 0..set.len() {
            csv.push_str(&format!("{},{}", set.domain, set.labels[i]));
            for v in latent.row(i) {
                csv.push_str(&format!(",{v:.6}"));
            }
            csv.push('\n');
        }
    }
    std::fs::write(&out, csv)?;
    println!("wrote {:?} ({} + {} rows)", out, s_sub.len(), t_sub.len());
    Ok(())
}
