//! Generate a synthetic two-domain scene pair and write it to disk in the
//! toolkit's cube/label formats.
//!
//! ```bash
//! cargo run --release --example generate_dataset
//! ```

use hyperalign::cube::{load_cube, synth_domain_pair, write_cube, write_labels, SynthConfig};

fn main() -> hyperalign::Result<()> {
    let config = SynthConfig::default_task();
    let pair = synth_domain_pair(&config, 42)?;

    let (source_cube, source_labels) = &pair.source;
    let (target_cube, target_labels) = &pair.target;
    println!(
        "source: {}x{} pixels, {} bands ({:?} nm span)",
        source_cube.height(),
        source_cube.width(),
        source_cube.bands(),
        (
            source_cube.wavelengths_nm()[0],
            *source_cube.wavelengths_nm().last().unwrap()
        ),
    );
    println!(
        "target: {} bands, gain {} offset {} jitter {}",
        target_cube.bands(),
        config.shift.gain,
        config.shift.offset,
        config.shift.per_band_jitter,
    );
    for class in 1..=config.classes as u32 {
        let s = source_labels.class_counts()[class as usize];
        let t = target_labels.class_counts()[class as usize];
        println!(
            "  class {class} ({}): {s} source px, {t} target px",
            source_labels.class_name(class).unwrap()
        );
    }

    let dir = std::env::temp_dir().join("hyperalign-example-dataset");
    std::fs::create_dir_all(&dir)?;
    write_cube(source_cube, &dir.join("source.hdr"))?;
    write_labels(source_labels, &dir.join("source.labels.csv"))?;
    write_cube(target_cube, &dir.join("target.hdr"))?;
    write_labels(target_labels, &dir.join("target.labels.csv"))?;

    // Round-trip sanity: reload and compare a spectrum.
    let reloaded = load_cube(&dir.join("source.hdr"))?;
    let a = source_cube.spectrum(3, 3);
    let b = reloaded.spectrum(3, 3);
    let max_err = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    println!("wrote {:?}; reload max error {max_err:.2e} (f32 payload)", dir);
    Ok(())
}
