//! Extract spectral-spatial patches from a scene and form a per-class
//! train/test split.
//!
//! ```bash
//! cargo run --release --example patches_and_splits
//! ```

use hyperalign::cube::{
    extract_patches, split_labels, synth_domain_pair, DomainTag, PatchSelection, SynthConfig,
};

fn main() -> hyperalign::Result<()> {
    let pair = synth_domain_pair(&SynthConfig::default_task(), 7)?;
    let (cube, labels) = &pair.source;

    // Window-5 patches: each sample is a 5x5 spatial block of full spectra,
    // mirror-padded at the borders, labeled by its center pixel.
    let patches = extract_patches(cube, labels, 5, PatchSelection::All, DomainTag::Source)?;
    println!(
        "{} patches of {}x{}x{} values each",
        patches.len(),
        patches.window,
        patches.window,
        patches.bands
    );
    let (r, c) = patches.origin_coords[0];
    assert_eq!(patches.center_spectrum(0), cube.spectrum(r, c));
    println!("center-pixel fidelity holds at ({r}, {c})");

    // Five labeled pixels per class for training; the rest is test.
    let split = split_labels(labels, 5, 1)?;
    println!(
        "split: {} train / {} test pixels (seed {})",
        split.train_indices.len(),
        split.test_indices.len(),
        split.seed
    );
    let train = patches.subset_by_pixel(labels.width(), &split.train_indices);
    for class in train.present_classes() {
        let n = train.labels.iter().filter(|&&l| l == class).count();
        println!("  class {class}: {n} training patches");
    }

    let json = split.to_json()?;
    println!(
        "split serializes to JSON ({} bytes); train starts {:?}",
        json.len(),
        &split.train_indices[..5.min(split.train_indices.len())]
    );
    Ok(())
}
