//! Pool-based active learning: entropy querying against random querying on
//! the same pool, with a simulated oracle revealing held-out ground truth.
//!
//! ```bash
//! cargo run --release --example active_learning
//! ```

use hyperalign::active::{run_loop, ALState, ActiveConfig, QueryStrategy};
use hyperalign::cube::{extract_patches, synth_domain_pair, DomainTag, PatchSelection, SynthConfig};
use hyperalign::net::parse_config;
use hyperalign::train::{evaluate, train_supervised, TrainConfig};

fn main() -> hyperalign::Result<()> {
    let pair = synth_domain_pair(&SynthConfig::default_task(), 301)?;
    let (cube, labels) = &pair.source;
    let all = extract_patches(cube, labels, 1, PatchSelection::All, DomainTag::Source)?;

    // Even pixels form the labeled+pool universe, odd pixels the test set.
    let universe = all.subset(&(0..all.len()).step_by(2).collect::<Vec<_>>());
    let test = all.subset(&(1..all.len()).step_by(2).collect::<Vec<_>>());

    let spec = parse_config("input-48 → fc-24 → dropout-0.3 → fc-16 → softmax-6")?;
    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 16,
        learning_rate: 0.1,
        seed: 1,
        ..TrainConfig::default()
    };

    let full = train_supervised(&spec, &universe, &cfg)?;
    let full_oa = evaluate(&full, &test)?.overall_accuracy;
    println!("full-pool reference OA: {full_oa:.3}");

    // Two labeled pixels per class to start; everything else is the pool.
    let mut labeled = Vec::new();
    let mut counts = std::collections::BTreeMap::new();
    for i in 0..universe.len() {
        let c = universe.labels[i];
        let e = counts.entry(c).or_insert(0usize);
        if *e < 2 {
            labeled.push(i);
            *e += 1;
        }
    }
    let pool: Vec<usize> = (0..universe.len()).filter(|i| !labeled.contains(i)).collect();

    for strategy in [QueryStrategy::Entropy, QueryStrategy::Random] {
        let state = ALState::new(labeled.clone(), pool.clone(), 30, 3)?;
        let (curve, _) = run_loop(
            &universe,
            state,
            strategy,
            &spec,
            &cfg,
            &ActiveConfig::default(),
            &test,
        )?;
        println!("\n{strategy} querying:");
        for point in &curve {
            let bar = "#".repeat((point.overall_accuracy * 40.0) as usize);
            println!(
                "  {:3} labels  OA {:.3}  {bar}",
                point.labels_used, point.overall_accuracy
            );
        }
    }
    Ok(())
}
