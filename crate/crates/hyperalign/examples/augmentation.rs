//! Label-preserving augmentation: dihedral variants, virtual scaling and
//! mixing, block pairs, random occlusion, and neighbor-based pseudo-label
//! expansion.
//!
//! ```bash
//! cargo run --release --example augmentation
//! ```

use hyperalign::augment::{
    block_pairs, dihedral_variants, knn_pseudo_expand, random_occlusion, virtual_mix,
    virtual_scale, AugmentPlan,
};
use hyperalign::cube::{
    extract_patches, synth_domain_pair, DomainTag, PatchSelection, SynthConfig, ValueKind,
};

fn main() -> hyperalign::Result<()> {
    let mut config = SynthConfig::default_task();
    config.height = 20;
    config.width = 20;
    let pair = synth_domain_pair(&config, 3)?;
    let (cube, labels) = &pair.source;
    let patches = extract_patches(cube, labels, 3, PatchSelection::All, DomainTag::Source)?;

    let variants = dihedral_variants(&patches.patches[0], 3, patches.bands)?;
    println!("dihedral: 1 patch -> {} spatial symmetries", variants.len());

    let scaled = virtual_scale(&patches.patches[0], 1.15, ValueKind::Reflectance)?;
    println!(
        "virtual scale x1.15: first values {:.3} -> {:.3} (clipped at 1)",
        patches.patches[0][0], scaled[0]
    );

    let same_class: Vec<usize> = (0..patches.len())
        .filter(|&i| patches.labels[i] == patches.labels[0])
        .take(2)
        .collect();
    let mixed = virtual_mix(
        &patches.patches[same_class[0]],
        &patches.patches[same_class[1]],
        patches.labels[same_class[0]],
        patches.labels[same_class[1]],
        0.5,
    )?;
    println!("virtual mix at weight 0.5: first value {:.3}", mixed[0]);

    let occluded = random_occlusion(&patches.patches[0], 3, patches.bands, 0.3, 9)?;
    let changed = (0..9)
        .filter(|&px| {
            occluded[px * patches.bands..(px + 1) * patches.bands]
                != patches.patches[0][px * patches.bands..(px + 1) * patches.bands]
        })
        .count();
    println!("random occlusion at 0.3: {changed}/9 pixels replaced by the band means");

    // Balanced same/different pairs from a labeled subset.
    let labeled_idx: Vec<usize> = (0..patches.len()).step_by(7).collect();
    let pairs = block_pairs(&patches.subset(&labeled_idx), 3, 1)?;
    println!("block pairs: {} balanced pairs from {} blocks", pairs.pairs.len(), labeled_idx.len());

    // Reveal a few labels, then let unanimous neighborhoods promote more.
    let labeled = patches.subset(&(0..patches.len()).step_by(5).collect::<Vec<_>>());
    let mut pool = patches.subset(&(1..patches.len()).step_by(5).collect::<Vec<_>>());
    for l in &mut pool.labels {
        *l = 0;
    }
    let promoted = knn_pseudo_expand(&labeled, &pool, 3, 3.0)?;
    let correct = promoted
        .iter()
        .filter(|&&(i, c)| patches.labels[1 + i * 5] == c)
        .count();
    println!(
        "pseudo-label expansion: {} pool samples promoted, {correct} match the hidden truth",
        promoted.len()
    );

    let plan = AugmentPlan {
        dihedral: true,
        scale_range: Some((0.9, 1.1)),
        mix_weight_range: Some((0.3, 0.7)),
        occlusion_fraction_range: Some((0.1, 0.3)),
        seed: 5,
        ..AugmentPlan::default()
    };
    let expanded = hyperalign::augment::expand(&labeled, &plan, ValueKind::Reflectance)?;
    println!("full plan: {} labeled samples -> {}", labeled.len(), expanded.len());
    Ok(())
}
