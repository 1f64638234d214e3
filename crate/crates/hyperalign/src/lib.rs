//! Hyperspectral image classification under label scarcity and domain shift.
//!
//! The crate bundles five pieces that are usually scattered across a
//! research codebase:
//!
//! - [`cube`]: the data model (cubes, label maps, patch sets), file formats,
//!   train/test splits, and a synthetic two-domain scene generator so every
//!   pipeline can be exercised at desk scale without proprietary data.
//! - [`augment`]: label-preserving sample transformations (dihedral
//!   variants, virtual scaling and mixing, block pairs, random occlusion,
//!   k-nearest-neighbor pseudo-label expansion).
//! - [`net`]: declarative network specs parsed from a compact config
//!   grammar, forward evaluation with per-layer feature taps, hand-rolled
//!   backpropagation, Monte Carlo dropout inference, and mirrored
//!   reconstruction decoders.
//! - [`datl`]: the feature-alignment mathematics -- stochastic-neighbor
//!   probabilities, class-conditional distance ratios, the alignment loss,
//!   and proxy-A-distance estimation of its trade-off parameter.
//! - [`train`] and [`active`]: training orchestration (supervised,
//!   reconstruction-regularized, pseudo-label pretraining + fine-tuning,
//!   dual-branch adaptation) and pool-based active learning.
//!
//! Start with the runnable examples, one per capability:
//!
//! ```text
//! cargo run --release --example generate_dataset
//! cargo run --release --example patches_and_splits
//! cargo run --release --example augmentation
//! cargo run --release --example network_grammar
//! cargo run --release --example supervised_baseline
//! cargo run --release --example pseudo_label_pipeline
//! cargo run --release --example reconstruction_semisup
//! cargo run --release --example domain_adaptation_fann
//! cargo run --release --example uncertainty_mc_dropout
//! cargo run --release --example active_learning
//! cargo run --release --example export_features
//! ```
//!
//! A thin `hyperalign` binary exposes the same flows as subcommands
//! (`gen-synth`, `ingest`, `run`, `export-features`, `report`) driven by a
//! JSON experiment config; see the README.

pub mod active;
pub mod augment;
pub mod cube;
pub mod datl;
pub mod error;
pub mod experiment;
pub mod net;
pub mod runner;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
