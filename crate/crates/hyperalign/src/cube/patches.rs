//! Patch extraction: one window x window x bands sample per selected pixel,
//! centered on it, with mirrored borders.

use crate::error::{Error, Result};

use super::{DomainTag, HyperCube, LabelMap, PatchSet};

/// Which pixels to turn into patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchSelection {
    /// Only pixels with a nonzero label.
    Labeled,
    /// Every pixel; unlabeled ones get label 0.
    All,
}

/// Extract center-aligned square patches. Borders are handled by mirroring
/// (reflection about the edge pixel, which is not repeated); the patch label
/// is the center pixel's label.
pub fn extract_patches(
    cube: &HyperCube,
    labels: &LabelMap,
    window: usize,
    which: PatchSelection,
    domain: DomainTag,
) -> Result<PatchSet> {
    labels.matches(cube)?;
    if window % 2 == 0 {
        return Err(Error::argument(format!("window must be odd, got {window}")));
    }
    if window < 1 || window > cube.height().min(cube.width()) {
        return Err(Error::argument(format!(
            "window {window} must be in 1..=min(height, width) = {}",
            cube.height().min(cube.width())
        )));
    }

    let half = (window / 2) as isize;
    let bands = cube.bands();
    let mut patches = Vec::new();
    let mut out_labels = Vec::new();
    let mut coords = Vec::new();

    for r in 0..cube.height() {
        for c in 0..cube.width() {
            let label = labels.class_at(r, c);
            if which == PatchSelection::Labeled && label == 0 {
                continue;
            }
            let mut patch = Vec::with_capacity(window * window * bands);
            for dr in -half..=half {
                let rr = mirror_index(r as isize + dr, cube.height());
                for dc in -half..=half {
                    let cc = mirror_index(c as isize + dc, cube.width());
                    patch.extend_from_slice(cube.spectrum(rr, cc));
                }
            }
            patches.push(patch);
            out_labels.push(label);
            coords.push((r, c));
        }
    }

    Ok(PatchSet {
        window,
        bands,
        patches,
        labels: out_labels,
        origin_coords: coords,
        domain,
    })
}

/// Reflect an index into [0, len) about the boundary pixels. The edge pixel
/// itself is not repeated: -1 maps to 1 and len maps to len - 2.
fn mirror_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    let mut i = i;
    // At most two reflections are ever needed because the patch window never
    // exceeds the image.
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    debug_assert!((0..n).contains(&i));
    i as usize
}
