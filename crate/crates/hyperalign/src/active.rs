//! Pool-based active learning: a labeled set, an unlabeled pool, a query
//! strategy, and a simulated oracle that reveals held-out ground truth.
//! Each round retrains the model, evaluates it, queries the most
//! informative pool samples, and moves them to the labeled side.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::PatchSet;
use crate::error::{Error, Result};
use crate::net::{mc_forward, tap_features, NetworkSpec, ParamStore, TapPoint};
use crate::train::{evaluate, train_supervised, ModelArch, TrainConfig, TrainedModel};

/// Labeled/pool bookkeeping over one patch set, plus the accuracy-vs-labels
/// history of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALState {
    pub labeled: Vec<usize>,
    pub pool: Vec<usize>,
    /// Maximum total queries.
    pub budget: usize,
    /// Queries per round.
    pub step: usize,
    /// (labels_used, overall accuracy) per completed round.
    pub history: Vec<(usize, f64)>,
}

impl ALState {
    pub fn new(labeled: Vec<usize>, pool: Vec<usize>, budget: usize, step: usize) -> Result<Self> {
        let state = ALState {
            labeled,
            pool,
            budget,
            step,
            history: Vec::new(),
        };
        state.check_invariants()?;
        Ok(state)
    }

    /// Disjointness and duplicate-freedom of the two index sets.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for &i in self.labeled.iter().chain(&self.pool) {
            if !seen.insert(i) {
                return Err(Error::State(format!(
                    "index {i} appears twice across labeled and pool"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStrategy {
    Random,
    Entropy,
    Bald,
    DensityWeighted,
}

impl std::fmt::Display for QueryStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            QueryStrategy::Random => "random",
            QueryStrategy::Entropy => "entropy",
            QueryStrategy::Bald => "bald",
            QueryStrategy::DensityWeighted => "density_weighted",
        };
        write!(f, "{name}")
    }
}

/// Knobs for query scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveConfig {
    /// Stochastic passes per scored sample.
    pub mc_passes: usize,
    /// Neighborhood size for density weighting.
    pub density_k: usize,
    /// Keep model weights between rounds instead of retraining from
    /// scratch. Off by default for run-to-run comparability.
    pub warm_start: bool,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        ActiveConfig {
            mc_passes: 16,
            density_k: 10,
            warm_start: false,
        }
    }
}

/// Pick `n` pool samples to query.
///
/// `random` samples uniformly without replacement; `entropy` takes the
/// highest predictive entropies; `bald` the highest mutual information;
/// `density_weighted` the highest entropy x mean similarity to the k
/// nearest pool neighbors. Uncertainty strategies need a dropout-bearing
/// model. Ties break toward the lowest index; with every dropout rate at
/// zero the disagreement score is identically zero and `bald` degrades to
/// entropy ordering.
#[allow(clippy::too_many_arguments)]
pub fn query(
    strategy: QueryStrategy,
    spec: &NetworkSpec,
    params: &ParamStore,
    data: &PatchSet,
    pool: &[usize],
    n: usize,
    cfg: &ActiveConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    if n > pool.len() {
        return Err(Error::argument(format!(
            "cannot query {n} samples from a pool of {}",
            pool.len()
        )));
    }
    if n == pool.len() {
        let mut all = pool.to_vec();
        all.sort_unstable();
        return Ok(all);
    }

    if strategy == QueryStrategy::Random {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = pool.to_vec();
        shuffled.shuffle(&mut rng);
        let mut picked = shuffled[..n].to_vec();
        picked.sort_unstable();
        return Ok(picked);
    }

    let subset = data.subset(pool);
    let mc = mc_forward(spec, params, &subset, cfg.mc_passes, seed)?;
    // (primary, secondary) score per pool position.
    let scores: Vec<(f64, f64)> = match strategy {
        QueryStrategy::Entropy => mc.entropy.iter().map(|&h| (h, 0.0)).collect(),
        QueryStrategy::Bald => mc
            .mutual_info
            .iter()
            .zip(&mc.entropy)
            .map(|(&mi, &h)| (mi, h))
            .collect(),
        QueryStrategy::DensityWeighted => {
            let density = mean_neighbor_similarity(spec, params, &subset, cfg.density_k)?;
            mc.entropy
                .iter()
                .zip(&density)
                .map(|(&h, &d)| (h * d, 0.0))
                .collect()
        }
        QueryStrategy::Random => unreachable!(),
    };

    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .0
            .partial_cmp(&scores[a].0)
            .unwrap()
            .then(scores[b].1.partial_cmp(&scores[a].1).unwrap())
            .then(pool[a].cmp(&pool[b]))
    });
    let mut picked: Vec<usize> = order[..n].iter().map(|&k| pool[k]).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Mean cosine similarity of each sample to its k nearest pool neighbors,
/// measured on trunk features (the activation feeding the classifier).
fn mean_neighbor_similarity(
    spec: &NetworkSpec,
    params: &ParamStore,
    subset: &PatchSet,
    k: usize,
) -> Result<Vec<f64>> {
    let tap = if spec.layers.len() >= 2 {
        TapPoint::Layer(spec.layers.len() - 2)
    } else {
        TapPoint::Input
    };
    let feats = tap_features(spec, params, subset, tap)?;
    let n = subset.len();
    let norms: Vec<f64> = (0..n)
        .map(|i| {
            feats
                .row(i)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(1e-12)
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut sims: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dot: f64 = feats
                    .row(i)
                    .iter()
                    .zip(feats.row(j))
                    .map(|(a, b)| a * b)
                    .sum();
                dot / (norms[i] * norms[j])
            })
            .collect();
        sims.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let kk = k.min(sims.len()).max(1);
        out.push(sims[..kk].iter().sum::<f64>() / kk as f64);
    }
    Ok(out)
}

/// Reveal ground truth for queried indices and move them from the pool to
/// the labeled set. The labeled/pool sizes are conserved; querying an index
/// that is not in the pool is a state error.
pub fn oracle_label(state: &mut ALState, indices: &[usize], truth: &[u32]) -> Result<Vec<u32>> {
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        if state.labeled.contains(&i) {
            return Err(Error::State(format!("index {i} is already labeled")));
        }
        let pos = state
            .pool
            .iter()
            .position(|&p| p == i)
            .ok_or_else(|| Error::State(format!("index {i} is not in the pool")))?;
        state.pool.remove(pos);
        state.labeled.push(i);
        labels.push(truth[i]);
    }
    state.check_invariants()?;
    Ok(labels)
}

/// One point of a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub round: usize,
    pub labels_used: usize,
    pub overall_accuracy: f64,
    pub per_class: Vec<f64>,
}

/// Run the full loop: retrain on the labeled set, evaluate on `test`,
/// query `step` samples, reveal their labels, repeat until the budget is
/// spent. A zero budget produces the single initial evaluation; a nonzero
/// budget smaller than the step is an error. The initial labeled set must
/// cover every class.
pub fn run_loop(
    data: &PatchSet,
    mut state: ALState,
    strategy: QueryStrategy,
    spec: &NetworkSpec,
    train_cfg: &TrainConfig,
    active_cfg: &ActiveConfig,
    test: &PatchSet,
) -> Result<(Vec<CurvePoint>, ALState)> {
    if state.budget > 0 && state.budget < state.step {
        return Err(Error::argument(format!(
            "budget {} is smaller than the query step {}",
            state.budget, state.step
        )));
    }
    let classes = spec
        .softmax_classes()
        .ok_or_else(|| Error::Structure("active learning needs a classifier spec".into()))?;
    let covered: std::collections::BTreeSet<u32> =
        state.labeled.iter().map(|&i| data.labels[i]).collect();
    if (1..=classes as u32).any(|c| !covered.contains(&c)) {
        return Err(Error::argument(
            "the initial labeled set must contain every class at least once",
        ));
    }

    let mut curve = Vec::new();
    let mut spent = 0usize;
    let mut round = 0usize;
    let mut warm_params: Option<ParamStore> = None;

    loop {
        state.check_invariants()?;
        let labeled_set = data.subset(&state.labeled);
        let model = match warm_params.take() {
            Some(mut params) => {
                let history =
                    crate::train::run_sgd_on(spec, &mut params, &labeled_set, train_cfg)?;
                TrainedModel {
                    arch: ModelArch::Single {
                        spec: spec.clone(),
                        params,
                    },
                    history,
                    provenance: crate::train::Provenance {
                        config_hash: train_cfg.hash(),
                        seed: train_cfg.seed,
                    },
                }
            }
            None => train_supervised(spec, &labeled_set, train_cfg)?,
        };

        let report = evaluate(&model, test)?;
        curve.push(CurvePoint {
            round,
            labels_used: state.labeled.len(),
            overall_accuracy: report.overall_accuracy,
            per_class: report.per_class.clone(),
        });
        state
            .history
            .push((state.labeled.len(), report.overall_accuracy));

        if spent >= state.budget || state.pool.is_empty() {
            return Ok((curve, state));
        }

        let n = state.step.min(state.budget - spent).min(state.pool.len());
        let (mspec, mparams) = model.single()?;
        let picked = query(
            strategy,
            mspec,
            mparams,
            data,
            &state.pool,
            n,
            active_cfg,
            train_cfg.seed.wrapping_add(round as u64 + 1),
        )?;
        oracle_label(&mut state, &picked, &data.labels)?;
        spent += picked.len();
        round += 1;
        if active_cfg.warm_start {
            let (_, params) = model.single()?;
            warm_params = Some(params.clone());
        }
    }
}

/// Render a learning curve as CSV: round, labels_used, OA, then one
/// per-class column.
pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let classes = curve.first().map(|p| p.per_class.len()).unwrap_or(0);
    let mut out = String::from("round,labels_used,overall_accuracy");
    for c in 1..=classes {
        out.push_str(&format!(",class_{c}"));
    }
    out.push('\n');
    for p in curve {
        out.push_str(&format!(
            "{},{},{}",
            p.round, p.labels_used, p.overall_accuracy
        ));
        for v in &p.per_class {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{extract_patches, synth_domain_pair, DomainTag, PatchSelection, SynthConfig};
    use crate::net::parse_config;

    fn al_task(seed: u64) -> (PatchSet, PatchSet, NetworkSpec) {
        let mut config = SynthConfig::identity(3, 16, 16, 8);
        config.noise_snr_db = Some(18.0);
        config.mixing = Some(crate::cube::MixingConfig {
            fraction: 0.25,
            concentration: 1.0,
        });
        let pair = synth_domain_pair(&config, seed).unwrap();
        let all = extract_patches(
            &pair.source.0,
            &pair.source.1,
            1,
            PatchSelection::All,
            DomainTag::Source,
        )
        .unwrap();
        let pool_idx: Vec<usize> = (0..all.len()).filter(|i| i % 3 != 0).collect();
        let test_idx: Vec<usize> = (0..all.len()).filter(|i| i % 3 == 0).collect();
        let universe = all.subset(&pool_idx);
        let test = all.subset(&test_idx);
        let spec = parse_config("input-8 → fc-12 → dropout-0.3 → fc-8 → softmax-3").unwrap();
        (universe, test, spec)
    }

    fn initial_state(data: &PatchSet, per_class: usize, budget: usize, step: usize) -> ALState {
        let mut labeled = Vec::new();
        let mut counts = std::collections::BTreeMap::new();
        for i in 0..data.len() {
            let c = data.labels[i];
            let e = counts.entry(c).or_insert(0usize);
            if *e < per_class {
                labeled.push(i);
                *e += 1;
            }
        }
        let pool: Vec<usize> = (0..data.len()).filter(|i| !labeled.contains(i)).collect();
        ALState::new(labeled, pool, budget, step).unwrap()
    }

    #[test]
    fn querying_the_whole_pool_returns_everything() {
        let (data, _, spec) = al_task(0);
        let params = crate::net::init_params(&spec, 0).unwrap();
        let pool: Vec<usize> = (0..10).collect();
        for strategy in [
            QueryStrategy::Random,
            QueryStrategy::Entropy,
            QueryStrategy::Bald,
            QueryStrategy::DensityWeighted,
        ] {
            let picked = query(
                strategy,
                &spec,
                &params,
                &data,
                &pool,
                10,
                &ActiveConfig::default(),
                7,
            )
            .unwrap();
            assert_eq!(picked, pool);
        }
    }

    #[test]
    fn oversized_query_is_rejected() {
        let (data, _, spec) = al_task(1);
        let params = crate::net::init_params(&spec, 0).unwrap();
        let err = query(
            QueryStrategy::Random,
            &spec,
            &params,
            &data,
            &[1, 2, 3],
            4,
            &ActiveConfig::default(),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn entropy_ranking_matches_an_independent_recomputation() {
        let (data, _, spec) = al_task(2);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.1,
            seed: 3,
            ..TrainConfig::default()
        };
        let labeled: Vec<usize> = (0..30).collect();
        let model = train_supervised(&spec, &data.subset(&labeled), &cfg).unwrap();
        let (mspec, mparams) = model.single().unwrap();

        let pool: Vec<usize> = (30..80).collect();
        let active_cfg = ActiveConfig::default();
        let picked = query(
            QueryStrategy::Entropy,
            mspec,
            mparams,
            &data,
            &pool,
            5,
            &active_cfg,
            11,
        )
        .unwrap();

        // Standalone recomputation: same MC seed, entropy from the mean
        // probabilities by hand, rank, take 5 with the same tie rule.
        let subset = data.subset(&pool);
        let mc = mc_forward(mspec, mparams, &subset, active_cfg.mc_passes, 11).unwrap();
        let hand_entropy: Vec<f64> = (0..subset.len())
            .map(|i| {
                mc.mean_probs
                    .row(i)
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| -p * p.ln())
                    .sum()
            })
            .collect();
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by(|&a, &b| {
            hand_entropy[b]
                .partial_cmp(&hand_entropy[a])
                .unwrap()
                .then(pool[a].cmp(&pool[b]))
        });
        let mut expected: Vec<usize> = order[..5].iter().map(|&k| pool[k]).collect();
        expected.sort_unstable();
        assert_eq!(picked, expected);
    }

    #[test]
    fn uniform_prediction_outranks_confident_prediction_under_entropy() {
        // Hand-built single-softmax model over 2 bands whose logit gap is
        // proportional to x0 - x1: sample (1, 0) is confident, (0.5, 0.5)
        // sits on the boundary and should be queried first.
        let spec = parse_config("input-2 → dropout-0.0 → softmax-2").unwrap();
        let mut params = crate::net::init_params(&spec, 0).unwrap();
        if let crate::net::LayerParams::Dense { w, .. } = &mut params.layers[1] {
            w.data = vec![4.0, -4.0, -4.0, 4.0];
        }
        let data = PatchSet {
            window: 1,
            bands: 2,
            patches: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            labels: vec![0, 0],
            origin_coords: vec![(0, 0), (0, 1)],
            domain: DomainTag::Source,
        };
        let picked = query(
            QueryStrategy::Entropy,
            &spec,
            &params,
            &data,
            &[0, 1],
            1,
            &ActiveConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(picked, vec![1], "the uniform sample should be queried first");
    }

    #[test]
    fn bald_with_zero_rate_falls_back_to_entropy_order() {
        let (data, _, _) = al_task(9);
        let spec = parse_config("input-8 → fc-8 → dropout-0.0 → softmax-3").unwrap();
        let params = crate::net::init_params(&spec, 3).unwrap();
        let pool: Vec<usize> = (0..40).collect();
        let cfg = ActiveConfig::default();
        let by_bald = query(QueryStrategy::Bald, &spec, &params, &data, &pool, 6, &cfg, 5).unwrap();
        let by_entropy =
            query(QueryStrategy::Entropy, &spec, &params, &data, &pool, 6, &cfg, 5).unwrap();
        assert_eq!(by_bald, by_entropy);
    }

    #[test]
    fn oracle_moves_indices_and_rejects_double_labeling() {
        let (data, _, _) = al_task(3);
        let mut state = ALState::new(vec![0, 1], (2..20).collect(), 10, 5).unwrap();
        let before = state.labeled.len() + state.pool.len();
        let labels = oracle_label(&mut state, &[5, 7], &data.labels).unwrap();
        assert_eq!(labels, vec![data.labels[5], data.labels[7]]);
        assert_eq!(state.labeled.len() + state.pool.len(), before);
        assert!(state.labeled.contains(&5));
        let err = oracle_label(&mut state, &[5], &data.labels).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn zero_budget_gives_a_single_evaluation_point() {
        let (data, test, spec) = al_task(4);
        let state = initial_state(&data, 3, 0, 5);
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 16,
            learning_rate: 0.1,
            seed: 0,
            ..TrainConfig::default()
        };
        let (curve, final_state) = run_loop(
            &data,
            state,
            QueryStrategy::Random,
            &spec,
            &cfg,
            &ActiveConfig::default(),
            &test,
        )
        .unwrap();
        assert_eq!(curve.len(), 1);
        assert_eq!(final_state.history.len(), 1);
    }

    #[test]
    fn budget_below_step_is_rejected() {
        let (data, test, spec) = al_task(5);
        let state = initial_state(&data, 3, 3, 5);
        let err = run_loop(
            &data,
            state,
            QueryStrategy::Random,
            &spec,
            &TrainConfig::default(),
            &ActiveConfig::default(),
            &test,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn loop_preserves_conservation_and_is_deterministic() {
        let (data, test, spec) = al_task(6);
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 16,
            learning_rate: 0.1,
            seed: 2,
            ..TrainConfig::default()
        };
        let run = |strategy| {
            let state = initial_state(&data, 2, 20, 10);
            run_loop(
                &data,
                state,
                strategy,
                &spec,
                &cfg,
                &ActiveConfig::default(),
                &test,
            )
            .unwrap()
        };
        let (curve_a, state_a) = run(QueryStrategy::Entropy);
        let (curve_b, state_b) = run(QueryStrategy::Entropy);
        assert_eq!(curve_a, curve_b);
        assert_eq!(state_a, state_b);
        assert_eq!(curve_a.len(), 3); // initial + 2 rounds of 10
        assert_eq!(state_a.labeled.len(), 6 + 20);
        state_a.check_invariants().unwrap();
    }
}
