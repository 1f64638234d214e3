//! Per-class train/test splitting of a labeled scene.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{LabelMap, SplitSpec};

/// Sample `per_class` labeled pixels per class uniformly at random without
/// replacement; everything else labeled becomes the test set. Indices are
/// linear pixel indices (row * width + col).
pub fn split_labels(labels: &LabelMap, per_class: usize, seed: u64) -> Result<SplitSpec> {
    if per_class == 0 {
        return Err(Error::Split("per_class must be at least 1".into()));
    }

    let num_classes = labels.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes + 1];
    for r in 0..labels.height() {
        for c in 0..labels.width() {
            let id = labels.class_at(r, c);
            if id != 0 {
                by_class[id as usize].push(r * labels.width() + c);
            }
        }
    }

    for (id, pixels) in by_class.iter().enumerate().skip(1) {
        if pixels.len() < per_class {
            let name = labels
                .class_name(id as u32)
                .unwrap_or("<unnamed>")
                .to_string();
            return Err(Error::Split(format!(
                "class {id} ({name}) has {} labeled pixels, needs {per_class}",
                pixels.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for pixels in by_class.iter().skip(1) {
        let mut shuffled = pixels.clone();
        shuffled.shuffle(&mut rng);
        train.extend_from_slice(&shuffled[..per_class]);
        test.extend_from_slice(&shuffled[per_class..]);
    }

    if test.is_empty() {
        return Err(Error::Split(
            "split leaves an empty test set; reduce per_class".into(),
        ));
    }

    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec {
        per_class_train: per_class,
        seed,
        train_indices: train,
        test_indices: test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nine_class_map() -> LabelMap {
        // A 9x9 image; row r is entirely class r+1 (9 pixels per class).
        let mut classes = Vec::with_capacity(81);
        for r in 0..9u32 {
            classes.extend(std::iter::repeat(r + 1).take(9));
        }
        let names = (1..=9).map(|i| format!("class{i}")).collect();
        LabelMap::new(9, 9, classes, names).unwrap()
    }

    #[test]
    fn five_per_class_over_nine_classes_gives_45_train() {
        let spec = split_labels(&nine_class_map(), 5, 3).unwrap();
        assert_eq!(spec.train_indices.len(), 45);
        assert_eq!(spec.test_indices.len(), 81 - 45);
        let overlap = spec
            .train_indices
            .iter()
            .filter(|i| spec.test_indices.contains(i))
            .count();
        assert_eq!(overlap, 0);
    }

    #[test]
    fn taking_every_pixel_is_rejected() {
        let err = split_labels(&nine_class_map(), 9, 0).unwrap_err();
        assert!(matches!(err, Error::Split(_)));
    }

    #[test]
    fn undersized_class_error_names_the_class() {
        let labels = LabelMap::new(
            2,
            3,
            vec![1, 1, 1, 2, 0, 0],
            vec!["big".into(), "small".into()],
        )
        .unwrap();
        let err = split_labels(&labels, 2, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("small"), "message should name the class: {msg}");
    }

    #[test]
    fn fixed_seed_reproduces_the_split() {
        let labels = nine_class_map();
        let a = split_labels(&labels, 4, 42).unwrap();
        let b = split_labels(&labels, 4, 42).unwrap();
        assert_eq!(a, b);
        let c = split_labels(&labels, 4, 43).unwrap();
        assert_ne!(a.train_indices, c.train_indices);
    }
}
