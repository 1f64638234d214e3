//! Feature-alignment mathematics.
//!
//! Everything here operates on batches of latent features tapped from a
//! network layer. The central quantity is class-conditional
//! exponential-distance mass: for a labeled query, the ratio of
//! `sum exp(-d)` over same-class references to the same sum over
//! different-class references. Alignment training maximizes that ratio both
//! across domains (source references vs. labeled target queries) and within
//! the target domain, blended by a trade-off weight that is itself
//! estimated from how separable the two domains are (a proxy A-distance
//! from a linear domain discriminator).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::DomainTag;
use crate::error::{Error, Result};
use crate::tensor::{log_sum_exp, squared_distance, Tensor};

/// Latent features of one domain: an N x d matrix with per-row labels
/// (0 = unlabeled).
#[derive(Debug, Clone)]
pub struct FeatureBatch {
    pub domain: DomainTag,
    pub features: Tensor,
    pub labels: Vec<u32>,
}

impl FeatureBatch {
    pub fn new(domain: DomainTag, features: Tensor, labels: Vec<u32>) -> Result<Self> {
        if features.dims.len() != 2 {
            return Err(Error::argument("features must be an N x d matrix"));
        }
        if features.dims[0] != labels.len() {
            return Err(Error::argument(format!(
                "{} feature rows but {} labels",
                features.dims[0],
                labels.len()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Data("non-finite feature entries".into()));
        }
        Ok(FeatureBatch {
            domain,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.features.dims[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.dims[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }
}

/// How the trade-off weight between the cross-domain and within-target
/// terms is chosen, plus numerical options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    pub beta_mode: BetaMode,
    /// Final clamp on the estimated weight.
    pub beta_clamp: (f64, f64),
    /// Evaluate the exponential-distance sums in the log domain with
    /// max-subtraction. Off reproduces the naive literal sums.
    pub stability_shift: bool,
    /// Cross-validation folds for the domain discriminator.
    pub pad_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    Fixed(f64),
    PadEstimated,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            beta_mode: BetaMode::PadEstimated,
            beta_clamp: (0.0, 1.0),
            stability_shift: true,
            pad_folds: 5,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if let BetaMode::Fixed(beta) = self.beta_mode {
            if !(0.0..=1.0).contains(&beta) {
                return Err(Error::argument(format!(
                    "fixed trade-off weight must be in [0, 1], got {beta}"
                )));
            }
        }
        let (lo, hi) = self.beta_clamp;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::argument("beta_clamp must be a subrange of [0, 1]"));
        }
        if self.pad_folds < 2 {
            return Err(Error::argument("pad_folds must be at least 2"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Distances and neighbor probabilities
// ---------------------------------------------------------------------------

/// Squared Euclidean distance between two latent vectors.
pub fn pair_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            layer: "pair_distance".into(),
            msg: format!("dimension mismatch: {} vs {}", a.len(), b.len()),
        });
    }
    Ok(squared_distance(a, b))
}

/// Probability that `query` is the neighbor of each source sample:
/// `p_i ∝ exp(-||s_i - query||^2)`, normalized over the batch.
pub fn neighbor_probs(source: &FeatureBatch, query: &[f64], stable: bool) -> Result<Vec<f64>> {
    if source.is_empty() {
        return Err(Error::argument("neighbor_probs needs a nonempty source batch"));
    }
    let neg_d: Vec<f64> = (0..source.len())
        .map(|i| pair_distance(source.row(i), query).map(|d| -d))
        .collect::<Result<_>>()?;
    if stable {
        let lse = log_sum_exp(&neg_d);
        Ok(neg_d.iter().map(|v| (v - lse).exp()).collect())
    } else {
        let sum: f64 = neg_d.iter().map(|v| v.exp()).sum();
        Ok(neg_d.iter().map(|v| v.exp() / sum).collect())
    }
}

/// Class-conditional mass ratio for a labeled query against a reference
/// batch: `sum_{same class} exp(-d) / sum_{different class} exp(-d)`.
pub fn class_prob(source: &FeatureBatch, query: &[f64], class: u32, stable: bool) -> Result<f64> {
    let mut same = Vec::new();
    let mut diff = Vec::new();
    for i in 0..source.len() {
        if source.labels[i] == 0 {
            continue;
        }
        let neg_d = -pair_distance(source.row(i), query)?;
        if source.labels[i] == class {
            same.push(neg_d);
        } else {
            diff.push(neg_d);
        }
    }
    if same.is_empty() || diff.is_empty() {
        return Err(Error::DegenerateSupport(format!(
            "class {class} needs at least one same-class and one different-class reference \
             ({} same, {} different)",
            same.len(),
            diff.len()
        )));
    }
    if stable {
        Ok((log_sum_exp(&same) - log_sum_exp(&diff)).exp())
    } else {
        let s: f64 = same.iter().map(|v| v.exp()).sum();
        let d: f64 = diff.iter().map(|v| v.exp()).sum();
        Ok(s / d)
    }
}

// ---------------------------------------------------------------------------
// The alignment loss
// ---------------------------------------------------------------------------

/// Value and bookkeeping of one alignment-loss evaluation.
#[derive(Debug, Clone)]
pub struct DatlLoss {
    /// Mean negative log-ratio over evaluated target samples.
    pub value: f64,
    /// Labeled target samples that contributed.
    pub evaluated: usize,
    /// Labeled target samples skipped for missing class support.
    pub skipped: usize,
}

/// Alignment loss over a labeled source batch and a labeled target batch:
///
/// `-(1/M) Σ_j [ β log r_cross(j) + (1-β) log r_within(j) ]`
///
/// where `r_cross(j)` is the same/different-class mass ratio of target
/// sample j against the source batch, and `r_within(j)` the same ratio
/// against the other labeled target samples (self excluded). Minimizing the
/// loss maximizes both ratios; β weighs cross-domain alignment against
/// within-target class separation. A term with zero weight is neither
/// computed nor required to have support; samples missing support for an
/// active term are skipped and counted, and the loss degenerates to an
/// error only when every sample was skipped.
pub fn datl_loss(
    source: &FeatureBatch,
    target: &FeatureBatch,
    beta: f64,
    stable: bool,
) -> Result<DatlLoss> {
    Ok(datl_loss_grad(source, target, beta, stable)?.0)
}

/// [`datl_loss`] plus its gradients with respect to every source and target
/// feature entry (matrices shaped like the inputs).
pub fn datl_loss_grad(
    source: &FeatureBatch,
    target: &FeatureBatch,
    beta: f64,
    stable: bool,
) -> Result<(DatlLoss, Tensor, Tensor)> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::argument(format!(
            "trade-off weight must be in [0, 1], got {beta}"
        )));
    }
    if source.dim() != target.dim() {
        return Err(Error::Shape {
            layer: "datl_loss".into(),
            msg: format!(
                "latent dims differ: source {} vs target {}",
                source.dim(),
                target.dim()
            ),
        });
    }

    let mut d_source = Tensor::zeros(&source.features.dims);
    let mut d_target = Tensor::zeros(&target.features.dims);
    let mut total = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;

    let queries: Vec<usize> = (0..target.len()).filter(|&j| target.labels[j] != 0).collect();
    if queries.is_empty() {
        return Err(Error::DegenerateSupport(
            "the target batch has no labeled samples".into(),
        ));
    }

    struct Term {
        /// (reference row, same_class flag, -distance)
        refs: Vec<(usize, bool, f64)>,
        log_ratio: f64,
        /// softmax weights over same and different references
        same_w: Vec<f64>,
        diff_w: Vec<f64>,
    }

    // Build one ratio term: query row `q` of `batch_q` against reference
    // rows of `batch_r`, skipping `exclude` (self-pairs within a domain).
    let build_term = |batch_r: &FeatureBatch,
                      query: &[f64],
                      class: u32,
                      exclude: Option<usize>|
     -> Option<Term> {
        let mut refs = Vec::new();
        for i in 0..batch_r.len() {
            if batch_r.labels[i] == 0 || exclude == Some(i) {
                continue;
            }
            let neg_d = -squared_distance(batch_r.row(i), query);
            refs.push((i, batch_r.labels[i] == class, neg_d));
        }
        let same: Vec<f64> = refs.iter().filter(|r| r.1).map(|r| r.2).collect();
        let diff: Vec<f64> = refs.iter().filter(|r| !r.1).map(|r| r.2).collect();
        if same.is_empty() || diff.is_empty() {
            return None;
        }
        let (log_s, log_d, same_w, diff_w) = if stable {
            let ls = log_sum_exp(&same);
            let ld = log_sum_exp(&diff);
            (
                ls,
                ld,
                same.iter().map(|v| (v - ls).exp()).collect(),
                diff.iter().map(|v| (v - ld).exp()).collect(),
            )
        } else {
            let s: f64 = same.iter().map(|v| v.exp()).sum();
            let d: f64 = diff.iter().map(|v| v.exp()).sum();
            (
                s.ln(),
                d.ln(),
                same.iter().map(|v| v.exp() / s).collect(),
                diff.iter().map(|v| v.exp() / d).collect(),
            )
        };
        Some(Term {
            refs,
            log_ratio: log_s - log_d,
            same_w,
            diff_w,
        })
    };

    struct Contribution {
        query: usize,
        cross: Option<Term>,
        within: Option<Term>,
    }
    let mut contributions = Vec::new();

    for &j in &queries {
        let class = target.labels[j];
        let query = target.row(j);
        let cross = if beta > 0.0 {
            match build_term(source, query, class, None) {
                Some(t) => Some(t),
                None => {
                    skipped += 1;
                    continue;
                }
            }
        } else {
            None
        };
        let within = if beta < 1.0 {
            match build_term(target, query, class, Some(j)) {
                Some(t) => Some(t),
                None => {
                    skipped += 1;
                    continue;
                }
            }
        } else {
            None
        };

        let mut value = 0.0;
        if let Some(t) = &cross {
            value -= beta * t.log_ratio;
        }
        if let Some(t) = &within {
            value -= (1.0 - beta) * t.log_ratio;
        }
        total += value;
        evaluated += 1;
        contributions.push(Contribution {
            query: j,
            cross,
            within,
        });
    }

    if evaluated == 0 {
        return Err(Error::DegenerateSupport(
            "every labeled target sample lacked class support".into(),
        ));
    }

    // d loss / d (-d_i) = -weight * softmax_i for same-class references and
    // +weight * softmax_k for different-class ones; chain through
    // d_i = ||ref - query||^2. The 1/M averaging distributes into `scale`.
    let m = evaluated as f64;
    let dim = source.dim();
    for contrib in &contributions {
        let j = contrib.query;
        for (term, weight, is_cross) in [
            (&contrib.cross, beta, true),
            (&contrib.within, 1.0 - beta, false),
        ] {
            let Some(term) = term else { continue };
            if weight == 0.0 {
                continue;
            }
            let mut same_iter = term.same_w.iter();
            let mut diff_iter = term.diff_w.iter();
            for &(i, is_same, _) in &term.refs {
                let softmax_w = if is_same {
                    *same_iter.next().unwrap()
                } else {
                    *diff_iter.next().unwrap()
                };
                // d loss / d d_i (distance): +w*beta*softmax for same (loss has
                // -log sum_same), -w*beta*softmax for diff.
                let dl_dd = if is_same {
                    weight * softmax_w / m
                } else {
                    -weight * softmax_w / m
                };
                let (ref_row, d_ref): (&[f64], &mut Tensor) = if is_cross {
                    (source.row(i), &mut d_source)
                } else {
                    (target.row(i), &mut d_target)
                };
                let query_row: Vec<f64> = target.row(j).to_vec();
                // d d / d ref = 2 (ref - query); d d / d query = -2 (ref - query)
                for k in 0..dim {
                    let diff2 = 2.0 * (ref_row[k] - query_row[k]);
                    d_ref.data[i * dim + k] += dl_dd * diff2;
                }
                for k in 0..dim {
                    let diff2 = 2.0 * (ref_row[k] - query_row[k]);
                    d_target.data[j * dim + k] -= dl_dd * diff2;
                }
            }
        }
    }

    Ok((
        DatlLoss {
            value: total / m,
            evaluated,
            skipped,
        },
        d_source,
        d_target,
    ))
}

// ---------------------------------------------------------------------------
// Proxy A-distance and the trade-off weight
// ---------------------------------------------------------------------------

/// Map a domain-discriminator validation error to the trade-off weight:
/// `β = 1 - 2ε`, with ε clamped into [0, 0.5] first (a discriminator worse
/// than chance carries no signal). ε = 0.5 gives 0, ε = 0 gives 1.
pub fn beta_from_error(epsilon: f64) -> f64 {
    let eps = epsilon.clamp(0.0, 0.5);
    (1.0 - 2.0 * eps).clamp(0.0, 1.0)
}

/// Estimate the trade-off weight from feature batches of the two domains:
/// train a linear max-margin domain discriminator (hinge loss, domain tags
/// as binary labels) with k-fold cross-validation, take ε as the mean
/// validation error, and return `beta_from_error(ε)` clamped to the
/// configured range. More separable domains give a larger weight.
pub fn estimate_beta(
    source: &FeatureBatch,
    target: &FeatureBatch,
    cfg: &AdaptationConfig,
    seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::argument("estimate_beta needs nonempty batches"));
    }
    if source.dim() != target.dim() {
        return Err(Error::Shape {
            layer: "estimate_beta".into(),
            msg: "latent dims differ between domains".into(),
        });
    }
    let n = source.len() + target.len();
    if n < cfg.pad_folds {
        return Err(Error::argument(format!(
            "{n} samples cannot fill {} folds",
            cfg.pad_folds
        )));
    }

    // Standardize jointly so the hinge subgradient steps are well scaled.
    let dim = source.dim();
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut ys: Vec<f64> = Vec::with_capacity(n);
    for i in 0..source.len() {
        xs.push(source.row(i).to_vec());
        ys.push(1.0);
    }
    for i in 0..target.len() {
        xs.push(target.row(i).to_vec());
        ys.push(-1.0);
    }
    let mut mean = vec![0.0; dim];
    for x in &xs {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; dim];
    for x in &xs {
        for (s, (v, m)) in var.iter_mut().zip(x.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|s| (s / n as f64).sqrt().max(1e-12))
        .collect();
    for x in &mut xs {
        for k in 0..dim {
            x[k] = (x[k] - mean[k]) / std[k];
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let folds = cfg.pad_folds;
    let mut total_error = 0.0;
    for fold in 0..folds {
        let val: Vec<usize> = order
            .iter()
            .copied()
            .skip(fold)
            .step_by(folds)
            .collect();
        let train: Vec<usize> = order
            .iter()
            .copied()
            .filter(|i| !val.contains(i))
            .collect();
        let (w, b) = train_hinge(&xs, &ys, &train, &mut rng);
        let mut wrong = 0usize;
        for &i in &val {
            let score: f64 = w.iter().zip(&xs[i]).map(|(wk, xk)| wk * xk).sum::<f64>() + b;
            let pred = if score >= 0.0 { 1.0 } else { -1.0 };
            if pred != ys[i] {
                wrong += 1;
            }
        }
        total_error += wrong as f64 / val.len().max(1) as f64;
    }
    let epsilon = total_error / folds as f64;
    let beta = beta_from_error(epsilon);
    Ok(beta.clamp(cfg.beta_clamp.0, cfg.beta_clamp.1))
}

/// Subgradient descent on the regularized hinge loss
/// `λ/2 ||w||^2 + mean(max(0, 1 - y (w·x + b)))`.
fn train_hinge(
    xs: &[Vec<f64>],
    ys: &[f64],
    train: &[usize],
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    let dim = xs[0].len();
    let lambda = 1e-3;
    let epochs = 60;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order = train.to_vec();
    let mut step = 0usize;
    for _ in 0..epochs {
        order.shuffle(rng);
        for &i in &order {
            step += 1;
            let lr = 1.0 / (lambda * step as f64);
            let margin: f64 =
                ys[i] * (w.iter().zip(&xs[i]).map(|(wk, xk)| wk * xk).sum::<f64>() + b);
            for wk in w.iter_mut() {
                *wk *= 1.0 - lr * lambda;
            }
            if margin < 1.0 {
                for (wk, xk) in w.iter_mut().zip(&xs[i]) {
                    *wk += lr * ys[i] * xk;
                }
                b += lr * ys[i];
            }
        }
    }
    (w, b)
}
