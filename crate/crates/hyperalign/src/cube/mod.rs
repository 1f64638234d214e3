//! Data model for hyperspectral scenes: cubes, label maps, windowed patch
//! sets, two-domain pairs, and train/test splits, plus file ingestion and a
//! synthetic two-domain scene generator.

mod io;
mod patches;
pub mod profiles;
mod split;
mod synth;

pub use io::{load_cube, load_labels, write_cube, write_labels};
pub use patches::{extract_patches, PatchSelection};
pub use split::split_labels;
pub use synth::{synth_domain_pair, BandGrid, MixingConfig, ShiftConfig, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether cube values are reflectance (unitless, in [0,1]) or at-sensor
/// radiance (nonnegative).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Reflectance,
    Radiance,
}

impl std::fmt::Display for ValueKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValueKind::Reflectance => write!(f, "reflectance"),
            ValueKind::Radiance => write!(f, "radiance"),
        }
    }
}

/// Which of the two domains a sample or scene belongss to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Source,
    Target,
}

impl std::fmt::Display for DomainTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DomainTag::Source => write!(f, "source"),
            DomainTag::Target => write!(f, "target"),
        }
    }
}

/// A height x width x bands raster with per-band center wavelengths.
///
/// Values are stored row-major as (row, col, band). Construction validates
/// every invariant: wavelength count and ordering, value ranges for the
/// declared kind, and the absence of non-finite entries.
#[derive(Debug, Clone)]
pub struct HyperCube {
    height: usize,
    width: usize,
    bands: usize,
    wavelengths_nm: Vec<f64>,
    kind: ValueKind,
    values: Vec<f64>,
}

impl HyperCube {
    pub fn new(
        height: usize,
        width: usize,
        wavelengths_nm: Vec<f64>,
        kind: ValueKind,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bands = wavelengths_nm.len();
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::argument("cube dimensions must be nonzero"));
        }
        if values.len() != height * width * bands {
            return Err(Error::Format(format!(
                "value buffer has {} entries, expected {}x{}x{} = {}",
                values.len(),
                height,
                width,
                bands,
                height * width * bands
            )));
        }
        if !wavelengths_nm.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Data(
                "wavelengths must be strictly increasing".into(),
            ));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value at element {i}")));
            }
            match kind {
                ValueKind::Reflectance if !(0.0..=1.0).contains(&v) => {
                    return Err(Error::Data(format!(
                        "reflectance value {v} at element {i} outside [0, 1]"
                    )));
                }
                ValueKind::Radiance if v < 0.0 => {
                    return Err(Error::Data(format!(
                        "negative radiance value {v} at element {i}"
                    )));
                }
                _ => {}
            }
        }
        Ok(HyperCube {
            height,
            width,
            bands,
            wavelengths_nm,
            kind,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn wavelengths_nm(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    /// The spectrum at (row, col).
    pub fn spectrum(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.bands;
        &self.values[start..start + self.bands]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean spectrum over the pixels where `select` is true.
    pub fn mean_spectrum<F: Fn(usize, usize) -> bool>(&self, select: F) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.bands];
        let mut n = 0usize;
        for r in 0..self.height {
            for c in 0..self.width {
                if select(r, c) {
                    for (a, v) in acc.iter_mut().zip(self.spectrum(r, c)) {
                        *a += v;
                    }
                    n += 1;
                }
            }
        }
        if n == 0 {
            return None;
        }
        for a in &mut acc {
            *a /= n as f64;
        }
        Some(acc)
    }
}

/// Pixel-level class annotations paired with a cube. Class id 0 means
/// "unlabeled"; nonzero ids are contiguous 1..=C and each has a name.
#[derive(Debug, Clone)]
pub struct LabelMap {
    height: usize,
    width: usize,
    classes: Vec<u32>,
    class_names: Vec<String>,
}

impl LabelMap {
    pub fn new(
        height: usize,
        width: usize,
        classes: Vec<u32>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if classes.len() != height * width {
            return Err(Error::Format(format!(
                "label buffer has {} entries, expected {}x{}",
                classes.len(),
                height,
                width
            )));
        }
        let num_classes = class_names.len() as u32;
        for (i, &c) in classes.iter().enumerate() {
            if c > num_classes {
                return Err(Error::Data(format!(
                    "class id {c} at pixel {i} has no name (only {num_classes} classes declared)"
                )));
            }
        }
        Ok(LabelMap {
            height,
            width,
            classes,
            class_names,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of named classes C; valid labels are 1..=C.
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Name of class `id` (1-based).
    pub fn class_name(&self, id: u32) -> Option<&str> {
        if id == 0 {
            return None;
        }
        self.class_names.get(id as usize - 1).map(|s| s.as_str())
    }

    pub fn class_at(&self, row: usize, col: usize) -> u32 {
        self.classes[row * self.width + col]
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    /// (row, col) coordinates of every pixel with a nonzero label.
    pub fn labeled_coords(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.class_at(r, c) != 0 {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Count of labeled pixels per class id (index 0 unused).
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes() + 1];
        for &c in &self.classes {
            if c != 0 {
                counts[c as usize] += 1;
            }
        }
        counts
    }

    /// Check that this map annotates a cube of the same height and width.
    pub fn matches(&self, cube: &HyperCube) -> Result<()> {
        if self.height != cube.height() || self.width != cube.width() {
            return Err(Error::Data(format!(
                "label map is {}x{} but cube is {}x{}",
                self.height,
                self.width,
                cube.height(),
                cube.width()
            )));
        }
        Ok(())
    }
}

/// Windowed spectral-spatial training samples extracted from a cube.
///
/// Each patch is a `window x window x bands` block flattened row-major as
/// (row, col, band); `labels[i] == 0` marks an unlabeled pool sample.
#[derive(Debug, Clone)]
pub struct PatchSet {
    pub window: usize,
    pub bands: usize,
    pub patches: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
    pub origin_coords: Vec<(usize, usize)>,
    pub domain: DomainTag,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Flattened patch length: window * window * bands.
    pub fn patch_len(&self) -> usize {
        self.window * self.window * self.bands
    }

    /// The spectrum of the center pixel of patch `i`.
    pub fn center_spectrum(&self, i: usize) -> &[f64] {
        let half = self.window / 2;
        let start = (half * self.window + half) * self.bands;
        &self.patches[i][start..start + self.bands]
    }

    /// A new set containing the given sample indices, in order.
    pub fn subset(&self, indices: &[usize]) -> PatchSet {
        PatchSet {
            window: self.window,
            bands: self.bands,
            patches: indices.iter().map(|&i| self.patches[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            origin_coords: indices.iter().map(|&i| self.origin_coords[i]).collect(),
            domain: self.domain,
        }
    }

    /// Samples whose linear pixel index (row * width + col) is in `pixels`.
    pub fn subset_by_pixel(&self, width: usize, pixels: &[usize]) -> PatchSet {
        use std::collections::HashSet;
        let wanted: HashSet<usize> = pixels.iter().copied().collect();
        let indices: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let (r, c) = self.origin_coords[i];
                wanted.contains(&(r * width + c))
            })
            .collect();
        self.subset(&indices)
    }

    /// Distinct nonzero labels present, ascending.
    pub fn present_classes(&self) -> Vec<u32> {
        let mut cs: Vec<u32> = self.labels.iter().copied().filter(|&c| c != 0).collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    }
}

/// A source scene and a target scene over the same class-name set, the unit
/// of a domain-adaptation experiment.
#[derive(Debug, Clone)]
pub struct DomainPair {
    pub source: (HyperCube, LabelMap),
    pub target: (HyperCube, LabelMap),
    /// Generator settings when synthetic; empty for real scenes.
    pub shift_metadata: String,
}

impl DomainPair {
    pub fn new(
        source: (HyperCube, LabelMap),
        target: (HyperCube, LabelMap),
        shift_metadata: String,
    ) -> Result<Self> {
        source.1.matches(&source.0)?;
        target.1.matches(&target.0)?;
        if source.1.class_names() != target.1.class_names() {
            return Err(Error::Data(
                "source and target label maps must share one class-name set".into(),
            ));
        }
        Ok(DomainPair {
            source,
            target,
            shift_metadata,
        })
    }
}

/// A per-class train/test split over the labeled pixels of one scene.
/// Indices are linear pixel indices (row * width + col).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub per_class_train: usize,
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl SplitSpec {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SplitSpec = serde_json::from_str(text)?;
        let mut seen = std::collections::HashSet::new();
        for &i in spec.train_indices.iter().chain(&spec.test_indices) {
            if !seen.insert(i) {
                return Err(Error::Split(format!(
                    "index {i} appears in both train and test"
                )));
            }
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cube() -> HyperCube {
        HyperCube::new(
            2,
            2,
            vec![500.0, 600.0, 700.0],
            ValueKind::Reflectance,
            vec![0.1; 12],
        )
        .unwrap()
    }

    #[test]
    fn cube_rejects_nonincreasing_wavelengths() {
        let err = HyperCube::new(
            1,
            1,
            vec![600.0, 600.0],
            ValueKind::Reflectance,
            vec![0.5, 0.5],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn cube_rejects_out_of_range_reflectance() {
        let err = HyperCube::new(1, 1, vec![500.0], ValueKind::Reflectance, vec![1.5]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn cube_rejects_nan() {
        let err =
            HyperCube::new(1, 1, vec![500.0], ValueKind::Radiance, vec![f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn radiance_allows_values_above_one() {
        assert!(HyperCube::new(1, 1, vec![500.0], ValueKind::Radiance, vec![120.0]).is_ok());
    }

    #[test]
    fn label_map_requires_named_classes() {
        let err = LabelMap::new(1, 2, vec![0, 3], vec!["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn domain_pair_requires_shared_class_names() {
        let cube = tiny_cube();
        let a = LabelMap::new(2, 2, vec![1, 1, 2, 2], vec!["x".into(), "y".into()]).unwrap();
        let b = LabelMap::new(2, 2, vec![1, 1, 2, 2], vec!["x".into(), "z".into()]).unwrap();
        let err = DomainPair::new(
            (cube.clone(), a),
            (cube, b),
            String::new(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn split_spec_json_round_trip() {
        let spec = SplitSpec {
            per_class_train: 5,
            seed: 7,
            train_indices: vec![1, 2, 3],
            test_indices: vec![4, 5],
        };
        let json = spec.to_json().unwrap();
        assert_eq!(SplitSpec::from_json(&json).unwrap(), spec);
    }

    #[test]
    fn split_spec_json_rejects_overlap() {
        let json = r#"{"per_class_train":1,"seed":0,"train_indices":[1,2],"test_indices":[2,3]}"#;
        assert!(SplitSpec::from_json(json).is_err());
    }
}
