//! Label-preserving sample transformations and pseudo-sample generation.
//!
//! Every operation is a pure function of its inputs and an explicit seed;
//! shapes and (where defined) labels are preserved.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{PatchSet, ValueKind};
use crate::error::{Error, Result};

/// Which transformations an experiment enables, with their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    /// Emit the 8 spatial flips/rotations of each sample.
    pub dihedral: bool,
    /// Per-sample multiplicative factor range; None disables scaling.
    pub scale_range: Option<(f64, f64)>,
    /// Same-class convex mixing weight range in (0, 1); None disables.
    pub mix_weight_range: Option<(f64, f64)>,
    /// Occluded-area fraction range in (0, 1); None disables occlusion.
    pub occlusion_fraction_range: Option<(f64, f64)>,
    /// Window for block pairing.
    pub block_window: usize,
    /// Neighbor count for pseudo-label expansion.
    pub knn_k: usize,
    /// Spatial radius (pixels) for pseudo-label expansion.
    pub knn_radius: f64,
    pub seed: u64,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        AugmentPlan {
            dihedral: false,
            scale_range: None,
            mix_weight_range: None,
            occlusion_fraction_range: None,
            block_window: 3,
            knn_k: 3,
            knn_radius: 4.0,
            seed: 0,
        }
    }
}

impl AugmentPlan {
    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.scale_range {
            if lo <= 0.0 || lo > hi {
                return Err(Error::argument("scale_range needs 0 < lo <= hi"));
            }
        }
        if let Some((lo, hi)) = self.mix_weight_range {
            if !(0.0 < lo && lo <= hi && hi < 1.0) {
                return Err(Error::argument("mix_weight_range must lie inside (0, 1)"));
            }
        }
        if let Some((lo, hi)) = self.occlusion_fraction_range {
            if !(0.0 <= lo && lo <= hi && hi < 1.0) {
                return Err(Error::argument(
                    "occlusion_fraction_range must lie inside [0, 1)",
                ));
            }
        }
        if self.block_window % 2 == 0 {
            return Err(Error::argument("block_window must be odd"));
        }
        if self.knn_k == 0 {
            return Err(Error::argument("knn_k must be at least 1"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Dihedral variants
// ---------------------------------------------------------------------------

/// The 8 spatial symmetries of a square patch: 4 rotations times 2 flips.
/// The spectral axis is untouched and the label is unchanged. Output order:
/// identity, r90, r180, r270, then the horizontal flip of each.
pub fn dihedral_variants(patch: &[f64], window: usize, bands: usize) -> Result<Vec<Vec<f64>>> {
    if patch.len() != window * window * bands {
        return Err(Error::argument(format!(
            "patch has {} values, expected a square {window}x{window}x{bands} sample",
            patch.len()
        )));
    }
    let rotate = |p: &[f64]| -> Vec<f64> {
        // 90 degrees counterclockwise: out(r, c) = in(c, w-1-r).
        let mut out = vec![0.0; p.len()];
        for r in 0..window {
            for c in 0..window {
                let src = (c * window + (window - 1 - r)) * bands;
                let dst = (r * window + c) * bands;
                out[dst..dst + bands].copy_from_slice(&p[src..src + bands]);
            }
        }
        out
    };
    let flip = |p: &[f64]| -> Vec<f64> {
        // Horizontal flip: out(r, c) = in(r, w-1-c).
        let mut out = vec![0.0; p.len()];
        for r in 0..window {
            for c in 0..window {
                let src = (r * window + (window - 1 - c)) * bands;
                let dst = (r * window + c) * bands;
                out[dst..dst + bands].copy_from_slice(&p[src..src + bands]);
            }
        }
        out
    };

    let mut out = Vec::with_capacity(8);
    let mut cur = patch.to_vec();
    for _ in 0..4 {
        out.push(cur.clone());
        cur = rotate(&cur);
    }
    let flipped = flip(patch);
    let mut cur = flipped;
    for _ in 0..4 {
        out.push(cur.clone());
        cur = rotate(&cur);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Virtual samples
// ---------------------------------------------------------------------------

/// Multiply a sample by a positive per-sample factor, clipping reflectance
/// back into [0, 1]. The label is preserved.
pub fn virtual_scale(sample: &[f64], factor: f64, kind: ValueKind) -> Result<Vec<f64>> {
    if factor <= 0.0 {
        return Err(Error::argument(format!(
            "scale factor must be positive, got {factor}"
        )));
    }
    Ok(sample
        .iter()
        .map(|v| {
            let s = v * factor;
            match kind {
                ValueKind::Reflectance => s.clamp(0.0, 1.0),
                ValueKind::Radiance => s.max(0.0),
            }
        })
        .collect())
}

/// Convex combination `weight * a + (1 - weight) * b` of two same-class
/// samples. Mixing across classes has no well-defined hard label and is
/// rejected.
pub fn virtual_mix(
    a: &[f64],
    b: &[f64],
    label_a: u32,
    label_b: u32,
    weight: f64,
) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::argument(format!(
            "samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if label_a != label_b {
        return Err(Error::argument(format!(
            "cannot mix samples of classes {label_a} and {label_b}"
        )));
    }
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::argument(format!(
            "mix weight must be in [0, 1], got {weight}"
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| weight * x + (1.0 - weight) * y)
        .collect())
}

// ---------------------------------------------------------------------------
// Block pairs
// ---------------------------------------------------------------------------

/// Label of a block pair: the shared class, or Different.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLabel {
    Same(u32),
    Different,
}

/// A balanced dataset of sample-index pairs with same/different labels.
#[derive(Debug, Clone)]
pub struct PairSet {
    pub pairs: Vec<(usize, usize)>,
    pub labels: Vec<PairLabel>,
}

/// Pair labeled blocks by class: every same-class and different-class pair
/// is enumerated, then the larger side is downsampled so both sides have
/// equal counts. When only one side exists (a single class present, or all
/// samples distinct), that side is emitted unbalanced.
pub fn block_pairs(patches: &PatchSet, block_window: usize, seed: u64) -> Result<PairSet> {
    if patches.window != block_window {
        return Err(Error::argument(format!(
            "patch window {} does not match the configured block window {block_window}",
            patches.window
        )));
    }
    let labeled: Vec<usize> = (0..patches.len())
        .filter(|&i| patches.labels[i] != 0)
        .collect();
    if labeled.len() < 2 {
        return Err(Error::Pairing(format!(
            "pairing needs at least 2 labeled samples, got {}",
            labeled.len()
        )));
    }

    let mut same = Vec::new();
    let mut different = Vec::new();
    for (a, &i) in labeled.iter().enumerate() {
        for &j in &labeled[a + 1..] {
            if patches.labels[i] == patches.labels[j] {
                same.push((i, j));
            } else {
                different.push((i, j));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !same.is_empty() && !different.is_empty() {
        let keep = same.len().min(different.len());
        let downsample = |pairs: &mut Vec<(usize, usize)>, rng: &mut ChaCha8Rng| {
            if pairs.len() > keep {
                pairs.shuffle(rng);
                pairs.truncate(keep);
                pairs.sort_unstable();
            }
        };
        downsample(&mut same, &mut rng);
        downsample(&mut different, &mut rng);
    }

    let mut pairs = Vec::with_capacity(same.len() + different.len());
    let mut labels = Vec::with_capacity(same.len() + different.len());
    for (i, j) in same {
        labels.push(PairLabel::Same(patches.labels[i]));
        pairs.push((i, j));
    }
    for (i, j) in different {
        labels.push(PairLabel::Different);
        pairs.push((i, j));
    }
    Ok(PairSet { pairs, labels })
}

// ---------------------------------------------------------------------------
// Random occlusion
// ---------------------------------------------------------------------------

/// Erase a contiguous rectangular spatial region covering about `fraction`
/// of the pixels, replacing every band inside it with the patch's per-band
/// mean. The label is preserved; a fraction that rounds to zero pixels
/// leaves the patch untouched.
pub fn random_occlusion(
    patch: &[f64],
    window: usize,
    bands: usize,
    fraction: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::argument(format!(
            "occlusion fraction must be in [0, 1), got {fraction}"
        )));
    }
    if patch.len() != window * window * bands {
        return Err(Error::argument("patch does not match window and bands"));
    }

    let target = (fraction * (window * window) as f64).round() as usize;
    let mut out = patch.to_vec();
    if target == 0 {
        return Ok(out);
    }

    let (rh, rw) = best_rectangle(target, window);
    let mut band_mean = vec![0.0; bands];
    for px in 0..window * window {
        for b in 0..bands {
            band_mean[b] += patch[px * bands + b];
        }
    }
    for m in &mut band_mean {
        *m /= (window * window) as f64;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r0 = rng.gen_range(0..=window - rh);
    let c0 = rng.gen_range(0..=window - rw);
    for r in r0..r0 + rh {
        for c in c0..c0 + rw {
            let px = r * window + c;
            out[px * bands..(px + 1) * bands].copy_from_slice(&band_mean);
        }
    }
    Ok(out)
}

/// The feasible rectangle (height, width) within a `window`-sized patch whose
/// area is closest to `target`, preferring squarer shapes on ties. Exact
/// whenever `target` has a divisor pair that fits.
fn best_rectangle(target: usize, window: usize) -> (usize, usize) {
    let mut best = (1usize, target.min(window));
    let mut best_err = usize::MAX;
    let mut best_squareness = usize::MAX;
    for rh in 1..=window {
        for rw in 1..=window {
            let err = (rh * rw).abs_diff(target);
            let squareness = rh.abs_diff(rw);
            if err < best_err || (err == best_err && squareness < best_squareness) {
                best_err = err;
                best_squareness = squareness;
                best = (rh, rw);
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// kNN pseudo-label expansion
// ---------------------------------------------------------------------------

/// Promote pool samples whose k nearest labeled neighbors -- nearest by
/// Euclidean distance on sample values, restricted to labeled samples within
/// `radius` pixels of the pool sample -- unanimously share one class.
/// Returns `(pool_index, promoted_label)` pairs; pool samples with fewer
/// than k labeled neighbors in range, or with disagreeing neighbors, are
/// left untouched. An empty result is not an error.
pub fn knn_pseudo_expand(
    labeled: &PatchSet,
    pool: &PatchSet,
    k: usize,
    radius: f64,
) -> Result<Vec<(usize, u32)>> {
    if k == 0 {
        return Err(Error::argument("k must be at least 1"));
    }
    if labeled.is_empty() {
        return Err(Error::argument("labeled set must be nonempty"));
    }
    if labeled.patch_len() != pool.patch_len() {
        return Err(Error::argument(
            "labeled and pool samples must share one shape",
        ));
    }

    let mut promoted = Vec::new();
    let r2 = radius * radius;
    for p in 0..pool.len() {
        let (pr, pc) = pool.origin_coords[p];
        // (spectral distance, labeled index) for in-radius labeled samples.
        let mut neighbors: Vec<(f64, usize)> = Vec::new();
        for l in 0..labeled.len() {
            if labeled.labels[l] == 0 {
                continue;
            }
            let (lr, lc) = labeled.origin_coords[l];
            let dr = pr as f64 - lr as f64;
            let dc = pc as f64 - lc as f64;
            if dr * dr + dc * dc > r2 {
                continue;
            }
            let d = crate::tensor::squared_distance(&pool.patches[p], &labeled.patches[l]);
            neighbors.push((d, l));
        }
        if neighbors.len() < k {
            continue;
        }
        neighbors.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let first = labeled.labels[neighbors[0].1];
        if neighbors[..k].iter().all(|&(_, l)| labeled.labels[l] == first) {
            promoted.push((p, first));
        }
    }
    Ok(promoted)
}

// ---------------------------------------------------------------------------
// Plan application
// ---------------------------------------------------------------------------

/// Expand a labeled patch set according to a plan. The original samples are
/// kept; each enabled transformation appends augmented copies. Deterministic
/// for a fixed (plan, input).
pub fn expand(patches: &PatchSet, plan: &AugmentPlan, kind: ValueKind) -> Result<PatchSet> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut out = patches.clone();

    let labeled: Vec<usize> = (0..patches.len())
        .filter(|&i| patches.labels[i] != 0)
        .collect();

    if plan.dihedral {
        for &i in &labeled {
            let variants = dihedral_variants(&patches.patches[i], patches.window, patches.bands)?;
            for v in variants.into_iter().skip(1) {
                out.patches.push(v);
                out.labels.push(patches.labels[i]);
                out.origin_coords.push(patches.origin_coords[i]);
            }
        }
    }

    if let Some((lo, hi)) = plan.scale_range {
        for &i in &labeled {
            let factor = rng.gen_range(lo..=hi);
            out.patches
                .push(virtual_scale(&patches.patches[i], factor, kind)?);
            out.labels.push(patches.labels[i]);
            out.origin_coords.push(patches.origin_coords[i]);
        }
    }

    if let Some((lo, hi)) = plan.mix_weight_range {
        // One mixed sample per labeled sample, partner drawn from its class.
        for &i in &labeled {
            let class = patches.labels[i];
            let mates: Vec<usize> = labeled
                .iter()
                .copied()
                .filter(|&j| j != i && patches.labels[j] == class)
                .collect();
            if mates.is_empty() {
                continue;
            }
            let j = mates[rng.gen_range(0..mates.len())];
            let weight = rng.gen_range(lo..=hi);
            out.patches.push(virtual_mix(
                &patches.patches[i],
                &patches.patches[j],
                class,
                class,
                weight,
            )?);
            out.labels.push(class);
            out.origin_coords.push(patches.origin_coords[i]);
        }
    }

    if let Some((lo, hi)) = plan.occlusion_fraction_range {
        for &i in &labeled {
            let fraction = rng.gen_range(lo..=hi);
            let seed = rng.gen::<u64>();
            out.patches.push(random_occlusion(
                &patches.patches[i],
                patches.window,
                patches.bands,
                fraction,
                seed,
            )?);
            out.labels.push(patches.labels[i]);
            out.origin_coords.push(patches.origin_coords[i]);
        }
    }

    Ok(out)
}
