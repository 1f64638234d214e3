//! Pluggable clustering for pseudo-label generation. The default is
//! k-means with k-means++ seeding and a restart cap; anything that can
//! label samples 1..=k can stand in (the interface accepts any labeling
//! function, so constrained mixture models can be plugged in unchanged).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::PatchSet;
use crate::error::{Error, Result};
use crate::tensor::squared_distance;

pub trait Clusterer {
    /// Partition `data` into k clusters; labels are 1..=k.
    fn assign(&self, data: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<u32>>;
}

/// Lloyd's algorithm with k-means++ seeding; the best of up to `restarts`
/// runs (lowest within-cluster sum of squares) wins.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KMeans {
    fn default() -> Self {
        KMeans {
            restarts: 50,
            max_iters: 100,
        }
    }
}

impl Clusterer for KMeans {
    fn assign(&self, data: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<u32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: Option<(f64, Vec<u32>)> = None;
        for _ in 0..self.restarts.max(1) {
            let (sse, labels) = self.run_once(data, k, &mut rng);
            if best.as_ref().map_or(true, |(b, _)| sse < *b) {
                best = Some((sse, labels));
            }
        }
        Ok(best.expect("at least one restart").1)
    }
}

impl KMeans {
    fn run_once(&self, data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<u32>) {
        let n = data.len();
        let mut centers = kmeanspp_seeds(data, k, rng);
        let mut assignment = vec![0usize; n];

        for _ in 0..self.max_iters {
            let mut changed = false;
            for (i, x) in data.iter().enumerate() {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let d = squared_distance(x, center);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                if assignment[i] != best {
                    assignment[i] = best;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let dim = data[0].len();
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (i, x) in data.iter().enumerate() {
                counts[assignment[i]] += 1;
                for (s, v) in sums[assignment[i]].iter_mut().zip(x) {
                    *s += v;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    for s in sums[c].iter_mut() {
                        *s /= counts[c] as f64;
                    }
                    centers[c] = sums[c].clone();
                }
                // Empty clusters keep their previous center.
            }
        }

        let sse: f64 = data
            .iter()
            .enumerate()
            .map(|(i, x)| squared_distance(x, &centers[assignment[i]]))
            .sum();
        (sse, assignment.iter().map(|&a| a as u32 + 1).collect())
    }
}

fn kmeanspp_seeds(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = data
        .iter()
        .map(|x| squared_distance(x, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All points coincide with a center; any point will do.
            rng.gen_range(0..n)
        } else {
            let mut t = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if t < w {
                    chosen = i;
                    break;
                }
                t -= w;
            }
            chosen
        };
        centers.push(data[next].clone());
        for (i, x) in data.iter().enumerate() {
            let d = squared_distance(x, centers.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

/// A clusterer that returns labels fixed up front. Used to plug ground
/// truth or an external model's assignment into the pretraining pipeline.
#[derive(Debug, Clone)]
pub struct FixedLabels(pub Vec<u32>);

impl Clusterer for FixedLabels {
    fn assign(&self, data: &[Vec<f64>], _k: usize, _seed: u64) -> Result<Vec<u32>> {
        if self.0.len() != data.len() {
            return Err(Error::argument(format!(
                "{} fixed labels for {} samples",
                self.0.len(),
                data.len()
            )));
        }
        Ok(self.0.clone())
    }
}

/// Cluster raw samples into k pseudo-labels (1..=k) via the given
/// clusterer. Needs k >= 2 and at least k samples.
pub fn cluster_pseudo(
    data: &[Vec<f64>],
    k: usize,
    seed: u64,
    clusterer: &dyn Clusterer,
) -> Result<Vec<u32>> {
    if k < 2 {
        return Err(Error::argument(format!("need k >= 2 clusters, got {k}")));
    }
    if data.len() < k {
        return Err(Error::argument(format!(
            "cannot form {k} clusters from {} samples",
            data.len()
        )));
    }
    let labels = clusterer.assign(data, k, seed)?;
    for &l in &labels {
        if l == 0 || l as usize > k {
            return Err(Error::argument(format!(
                "clusterer produced label {l} outside 1..={k}"
            )));
        }
    }
    Ok(labels)
}

/// Cluster the flattened patches of a set.
pub fn cluster_patches(
    set: &PatchSet,
    k: usize,
    seed: u64,
    clusterer: &dyn Clusterer,
) -> Result<Vec<u32>> {
    cluster_pseudo(&set.patches, k, seed, clusterer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs(n_per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for i in 0..2 * n_per {
            let (center, label) = if i < n_per { (0.0, 1) } else { (5.0, 2) };
            data.push(
                (0..3)
                    .map(|_| center + rng.gen_range(-0.5..0.5))
                    .collect::<Vec<f64>>(),
            );
            truth.push(label);
        }
        (data, truth)
    }

    #[test]
    fn recovers_well_separated_blobs_up_to_permutation() {
        let (data, truth) = two_blobs(30, 7);
        let labels = cluster_pseudo(&data, 2, 0, &KMeans::default()).unwrap();
        // Match against truth under both permutations; one must be perfect.
        let direct = labels
            .iter()
            .zip(&truth)
            .filter(|(a, b)| a == b)
            .count();
        let flipped = labels
            .iter()
            .zip(&truth)
            .filter(|(a, b)| 3 - **a == **b)
            .count();
        assert_eq!(direct.max(flipped), data.len());
    }

    #[test]
    fn k_equal_n_puts_each_sample_alone() {
        let data: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 2.0]).collect();
        let labels = cluster_pseudo(&data, 5, 3, &KMeans::default()).unwrap();
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5, "labels {labels:?} are not all distinct");
    }

    #[test]
    fn fixed_seed_reproduces_the_labeling() {
        let (data, _) = two_blobs(20, 1);
        let km = KMeans {
            restarts: 5,
            max_iters: 50,
        };
        let a = cluster_pseudo(&data, 3, 11, &km).unwrap();
        let b = cluster_pseudo(&data, 3, 11, &km).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_samples_is_an_argument_error() {
        let data = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            cluster_pseudo(&data, 3, 0, &KMeans::default()),
            Err(Error::Argument(_))
        ));
    }
}
