//! Acceptance suite: one test per exit criterion, each printing a pass
//! line with its runtime (run with `--nocapture` to see them).
//!
//! The mathematical criteria check the implementation against independent
//! brute-force oracles written in this file; the pipeline criteria are
//! directional reproductions on the built-in synthetic benchmark scene
//! with every threshold pinned here.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hyperalign::active::{run_loop, ALState, ActiveConfig, QueryStrategy};
use hyperalign::augment::{
    block_pairs, dihedral_variants, knn_pseudo_expand, random_occlusion, virtual_mix,
    virtual_scale, PairLabel,
};
use hyperalign::cube::{
    extract_patches, split_labels, synth_domain_pair, DomainTag, MixingConfig,
    PatchSelection, PatchSet, SynthConfig, ValueKind,
};
use hyperalign::datl::{
    beta_from_error, class_prob, datl_loss, datl_loss_grad, estimate_beta, neighbor_probs,
    AdaptationConfig, FeatureBatch,
};
use hyperalign::net::{
    backward, forward, init_params, mc_forward, parse_config, render_config, DropoutMode,
    FannSpec, LayerParams, LayerSpec, NetworkSpec, ParamStore,
};
use hyperalign::tensor::Tensor;
use hyperalign::train::{
    evaluate, finetune, layer_probe, pretrain_pseudo, train_fann, train_supervised, KMeans,
    ModelArch, ProbePoint, Provenance, TrainConfig, TrainedModel,
};

fn pass(criterion: &str, t0: Instant) {
    println!(
        "criterion {criterion}: PASS ({:.1}s)",
        t0.elapsed().as_secs_f64()
    );
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

fn median_usize(xs: &mut [usize]) -> usize {
    xs.sort_unstable();
    xs[xs.len() / 2]
}

// ===========================================================================
// Criterion 1: alignment math matches exhaustive brute force within 1e-10
// ===========================================================================

/// Brute-force oracles: literal sums of exponentials, no log-domain tricks,
/// written against the formulas rather than the library code.
mod oracle {
    pub fn distance(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..a.len() {
            s += (a[k] - b[k]) * (a[k] - b[k]);
        }
        s
    }

    pub fn neighbor(source: &[Vec<f64>], query: &[f64]) -> Vec<f64> {
        let mut mass: Vec<f64> = source.iter().map(|s| (-distance(s, query)).exp()).collect();
        let total: f64 = mass.iter().sum();
        for m in &mut mass {
            *m /= total;
        }
        mass
    }

    pub fn class_ratio(
        source: &[Vec<f64>],
        labels: &[u32],
        query: &[f64],
        class: u32,
    ) -> f64 {
        let mut same = 0.0;
        let mut diff = 0.0;
        for (s, &l) in source.iter().zip(labels) {
            let e = (-distance(s, query)).exp();
            if l == class {
                same += e;
            } else {
                diff += e;
            }
        }
        same / diff
    }

    /// Mean over labeled target queries of
    /// `-(beta ln r_cross + (1-beta) ln r_within)`, the within ratio taken
    /// over the other target samples.
    pub fn alignment_loss(
        source: &[Vec<f64>],
        source_labels: &[u32],
        target: &[Vec<f64>],
        target_labels: &[u32],
        beta: f64,
    ) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (j, (tq, &class)) in target.iter().zip(target_labels).enumerate() {
            let r_cross = class_ratio(source, source_labels, tq, class);
            let others: Vec<Vec<f64>> = target
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, t)| t.clone())
                .collect();
            let other_labels: Vec<u32> = target_labels
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, l)| *l)
                .collect();
            let r_within = class_ratio(&others, &other_labels, tq, class);
            total -= beta * r_cross.ln() + (1.0 - beta) * r_within.ln();
            count += 1;
        }
        total / count as f64
    }
}

/// Random instance with full class support on both sides.
fn random_instance(rng: &mut ChaCha8Rng) -> (FeatureBatch, FeatureBatch, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let classes = rng.gen_range(2..=3u32);
    let d = rng.gen_range(1..=4usize);
    // Every class appears at least twice per domain so the within term
    // keeps support after self-exclusion.
    let mut make = |domain: DomainTag| -> (FeatureBatch, Vec<Vec<f64>>) {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<u32> = Vec::new();
        for c in 1..=classes {
            for _ in 0..2 {
                rows.push((0..d).map(|_| rng.gen_range(-1.5..1.5)).collect());
                labels.push(c);
            }
        }
        while rows.len() < 8 && rng.gen_bool(0.5) {
            rows.push((0..d).map(|_| rng.gen_range(-1.5..1.5)).collect());
            labels.push(rng.gen_range(1..=classes));
        }
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        (
            FeatureBatch::new(domain, Tensor::from_vec(&[n, d], flat), labels).unwrap(),
            rows,
        )
    };
    let (source, s_rows) = make(DomainTag::Source);
    let (target, t_rows) = make(DomainTag::Target);
    (source, target, s_rows, t_rows)
}

#[test]
fn acceptance_01_alignment_math_matches_brute_force() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4101);
    for _ in 0..50 {
        let (source, target, s_rows, t_rows) = random_instance(&mut rng);
        let beta = rng.gen_range(0.0..=1.0);
        let query: Vec<f64> = (0..source.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();

        let probs = neighbor_probs(&source, &query, true).unwrap();
        let expected = oracle::neighbor(&s_rows, &query);
        for (a, b) in probs.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10, "neighbor probs {a} vs {b}");
        }

        let class = source.labels[0];
        let ratio = class_prob(&source, &query, class, true).unwrap();
        let expected = oracle::class_ratio(&s_rows, &source.labels, &query, class);
        assert!(
            (ratio - expected).abs() <= 1e-10 * expected.max(1.0),
            "class ratio {ratio} vs {expected}"
        );

        let loss = datl_loss(&source, &target, beta, true).unwrap();
        let expected = oracle::alignment_loss(&s_rows, &source.labels, &t_rows, &target.labels, beta);
        assert!(
            (loss.value - expected).abs() < 1e-10,
            "loss {} vs {expected}",
            loss.value
        );
        assert_eq!(loss.skipped, 0);
    }
    pass("01 (alignment math vs brute force)", t0);
}

// ===========================================================================
// Criterion 2: analytic gradients match central finite differences
// ===========================================================================

const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-4;

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb + 1e-12)
}

#[test]
fn acceptance_02a_alignment_gradients_match_finite_differences() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4202);
    for _ in 0..10 {
        let (source, target, _, _) = random_instance(&mut rng);
        let beta = rng.gen_range(0.1..=0.9);
        let (_, d_source, d_target) = datl_loss_grad(&source, &target, beta, true).unwrap();

        let eval = |s: &FeatureBatch, t: &FeatureBatch| -> f64 {
            datl_loss(s, t, beta, true).unwrap().value
        };
        let mut fd_source = vec![0.0; d_source.data.len()];
        for k in 0..fd_source.len() {
            let mut plus = source.clone();
            plus.features.data[k] += FD_STEP;
            let mut minus = source.clone();
            minus.features.data[k] -= FD_STEP;
            fd_source[k] = (eval(&plus, &target) - eval(&minus, &target)) / (2.0 * FD_STEP);
        }
        let mut fd_target = vec![0.0; d_target.data.len()];
        for k in 0..fd_target.len() {
            let mut plus = target.clone();
            plus.features.data[k] += FD_STEP;
            let mut minus = target.clone();
            minus.features.data[k] -= FD_STEP;
            fd_target[k] = (eval(&source, &plus) - eval(&source, &minus)) / (2.0 * FD_STEP);
        }
        assert!(
            rel_error(&d_source.data, &fd_source) < FD_TOL,
            "source gradient off by {}",
            rel_error(&d_source.data, &fd_source)
        );
        assert!(
            rel_error(&d_target.data, &fd_target) < FD_TOL,
            "target gradient off by {}",
            rel_error(&d_target.data, &fd_target)
        );
    }
    pass("02a (alignment loss gradient vs finite differences)", t0);
}

/// Scalar loss: fixed random weights times the network output, so the
/// output gradient is just the weight tensor.
fn layer_grad_check(spec: &NetworkSpec, instances: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for round in 0..instances {
        let params = init_params(spec, seed + round as u64).unwrap();
        let in_shape = spec.input_shape();
        let input = Tensor::from_vec(
            &in_shape.dims(),
            (0..in_shape.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let out_shape = spec.output_shape();
        let weights: Vec<f64> = (0..out_shape.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // Dropout masks must be identical for every evaluation: each call
        // reseeds the same stream, and mask sampling consumes a fixed
        // number of draws regardless of values.
        let dropout_seed = seed ^ 0x5eed;
        let eval = |params: &ParamStore, input: &Tensor| -> f64 {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            let pass = forward(spec, params, input, DropoutMode::Sample(&mut rng)).unwrap();
            pass.output().data.iter().zip(&weights).map(|(o, w)| o * w).sum()
        };

        let mut rng2 = ChaCha8Rng::seed_from_u64(dropout_seed);
        let pass_for_grad =
            forward(spec, &params, &input, DropoutMode::Sample(&mut rng2)).unwrap();
        let d_out = Tensor::from_vec(&out_shape.dims(), weights.clone());
        let (grads, d_input) = backward(spec, &params, &pass_for_grad, &d_out, &[]).unwrap();

        // Parameters.
        let n = params.num_scalars();
        if n > 0 {
            let analytic = grads.flatten();
            let mut fd = vec![0.0; n];
            for k in 0..n {
                let v = params.get_scalar(k);
                let mut p = params.clone();
                p.set_scalar(k, v + FD_STEP);
                let plus = eval(&p, &input);
                p.set_scalar(k, v - FD_STEP);
                let minus = eval(&p, &input);
                fd[k] = (plus - minus) / (2.0 * FD_STEP);
            }
            let err = rel_error(&analytic, &fd);
            assert!(err < FD_TOL, "{spec:?} round {round}: param gradient off by {err}");
        }

        // Input.
        let mut fd = vec![0.0; input.numel()];
        for k in 0..input.numel() {
            let mut plus = input.clone();
            plus.data[k] += FD_STEP;
            let mut minus = input.clone();
            minus.data[k] -= FD_STEP;
            fd[k] = (eval(&params, &plus) - eval(&params, &minus)) / (2.0 * FD_STEP);
        }
        let err = rel_error(&d_input.data, &fd);
        assert!(err < FD_TOL, "{spec:?} round {round}: input gradient off by {err}");
    }
}

#[test]
fn acceptance_02b_layer_gradients_match_finite_differences() {
    let t0 = Instant::now();
    let single = |layer: LayerSpec, bands: usize, window: usize| NetworkSpec {
        input_bands: bands,
        input_window: window,
        layers: vec![layer],
        auto_pool: false,
    };
    layer_grad_check(&single(LayerSpec::Conv { kernel: 3, filters: 2 }, 3, 5), 10, 9001);
    layer_grad_check(&single(LayerSpec::MaxPool, 3, 4), 10, 9002);
    layer_grad_check(&single(LayerSpec::Recurrent { state_dim: 4 }, 3, 2), 10, 9003);
    layer_grad_check(&single(LayerSpec::Dense { units: 3 }, 6, 1), 10, 9004);
    layer_grad_check(&single(LayerSpec::Linear { units: 3 }, 6, 1), 10, 9005);
    layer_grad_check(&single(LayerSpec::Softmax { classes: 3 }, 5, 1), 10, 9006);
    layer_grad_check(&single(LayerSpec::Dropout { rate: 0.4 }, 8, 1), 10, 9007);
    layer_grad_check(&single(LayerSpec::Upsample, 2, 3), 10, 9008);
    // And one composite net covering interactions.
    let composite = parse_config("input-3 → conv3-2 → recur-4 → fc-3 → softmax-2")
        .unwrap()
        .with_window(5);
    layer_grad_check(&composite, 10, 9009);
    pass("02b (layer gradients vs finite differences)", t0);
}

// ===========================================================================
// Criterion 3: trade-off weight calibration
// ===========================================================================

#[test]
fn acceptance_03_beta_calibration() {
    let t0 = Instant::now();
    assert_eq!(beta_from_error(0.5), 0.0);
    assert_eq!(beta_from_error(0.0), 1.0);

    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, 1.0).unwrap();
    let cloud = |rng: &mut ChaCha8Rng, center: f64, n: usize, d: usize| -> FeatureBatch {
        let rows: Vec<f64> = (0..n * d).map(|_| center + normal.sample(rng)).collect();
        FeatureBatch::new(
            DomainTag::Source,
            Tensor::from_vec(&[n, d], rows),
            vec![0; n],
        )
        .unwrap()
    };

    let cfg = AdaptationConfig::default();
    let mut identical = Vec::new();
    let mut separated = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4300 + seed);
        let a = cloud(&mut rng, 0.0, 60, 4);
        let b = cloud(&mut rng, 0.0, 60, 4);
        identical.push(estimate_beta(&a, &b, &cfg, seed).unwrap());
        let a = cloud(&mut rng, 0.0, 60, 4);
        let b = cloud(&mut rng, 6.0, 60, 4);
        separated.push(estimate_beta(&a, &b, &cfg, seed).unwrap());
    }
    let med_same = median(&mut identical);
    let med_far = median(&mut separated);
    assert!(med_same <= 0.2, "identical clouds gave median weight {med_same}");
    assert!(med_far >= 0.8, "separated clouds gave median weight {med_far}");
    pass("03 (trade-off weight calibration)", t0);
}

// ===========================================================================
// Criteria 4 and 6 share trained adaptation models on the default scene.
// ===========================================================================

struct AdaptationRun {
    fann: TrainedModel,
    cfg: TrainConfig,
    s_train: PatchSet,
    t_train: PatchSet,
    t_test: PatchSet,
    fann_oa: f64,
    baseline_oa: f64,
}

fn adaptation_runs() -> &'static Vec<AdaptationRun> {
    static RUNS: OnceLock<Vec<AdaptationRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (1..=5u64)
            .map(|seed| {
                let config = SynthConfig::default_task();
                let pair = synth_domain_pair(&config, 100 + seed).unwrap();
                let (s_cube, s_labels) = &pair.source;
                let (t_cube, t_labels) = &pair.target;
                let s_all = extract_patches(s_cube, s_labels, 1, PatchSelection::All, DomainTag::Source).unwrap();
                let t_all = extract_patches(t_cube, t_labels, 1, PatchSelection::All, DomainTag::Target).unwrap();
                let s_split = split_labels(s_labels, 40, seed).unwrap();
                let t_split = split_labels(t_labels, 5, seed ^ 0xa5a5).unwrap();
                let s_train = s_all.subset_by_pixel(s_labels.width(), &s_split.train_indices);
                let t_train = t_all.subset_by_pixel(t_labels.width(), &t_split.train_indices);
                let t_test = t_all.subset_by_pixel(t_labels.width(), &t_split.test_indices);

                let branch = parse_config("input-48 → fc-32 → fc-24").unwrap();
                let spec = FannSpec::new(
                    branch.clone(),
                    branch,
                    vec![(0, 0), (1, 1)],
                    16,
                    vec![LayerSpec::Softmax { classes: 6 }],
                )
                .unwrap();
                let cfg = TrainConfig {
                    epochs: 40,
                    batch_size: 24,
                    learning_rate: 0.05,
                    seed,
                    beta_refresh: 5,
                    ..TrainConfig::default()
                };
                let fann = train_fann(&spec, &s_train, &t_train, &cfg).unwrap();
                let fann_oa = evaluate(&fann, &t_test).unwrap().overall_accuracy;

                let base_spec = parse_config("input-48 → fc-32 → fc-24 → softmax-6").unwrap();
                let base = train_supervised(&base_spec, &s_train, &cfg).unwrap();
                let baseline_oa = evaluate(&base, &t_test).unwrap().overall_accuracy;

                AdaptationRun {
                    fann,
                    cfg,
                    s_train,
                    t_train,
                    t_test,
                    fann_oa,
                    baseline_oa,
                }
            })
            .collect()
    })
}

#[test]
fn acceptance_04_adaptation_lift_over_source_only_baseline() {
    let t0 = Instant::now();
    let runs = adaptation_runs();
    let mut lifts: Vec<f64> = runs
        .iter()
        .map(|r| (r.fann_oa - r.baseline_oa) * 100.0)
        .collect();
    let med = median(&mut lifts);
    println!(
        "  adaptation target-test OA: {:?} vs baseline {:?}",
        runs.iter().map(|r| (r.fann_oa * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        runs.iter().map(|r| (r.baseline_oa * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
    );
    assert!(
        med >= 10.0,
        "median adaptation lift {med:.1} points is below the 10-point bar"
    );
    pass("04 (adaptation lift over source-only baseline)", t0);
}

#[test]
fn acceptance_06_concatenated_probe_tops_single_layers() {
    let t0 = Instant::now();
    let runs = adaptation_runs();
    let mut singles: Vec<Vec<f64>> = vec![Vec::new(); 2];
    let mut concat = Vec::new();
    for run in runs.iter() {
        for p in 0..2 {
            singles[p].push(
                layer_probe(&run.fann, ProbePoint::Pair(p), &run.s_train, &run.t_train, &run.t_test, &run.cfg)
                    .unwrap(),
            );
        }
        concat.push(
            layer_probe(
                &run.fann,
                ProbePoint::Concatenated,
                &run.s_train,
                &run.t_train,
                &run.t_test,
                &run.cfg,
            )
            .unwrap(),
        );
    }
    let med_concat = median(&mut concat.clone());
    for (p, single) in singles.iter().enumerate() {
        let med_single = median(&mut single.clone());
        println!("  probe FA-{}: median {med_single:.3}; concatenated {med_concat:.3}", p + 1);
        assert!(
            med_concat >= med_single,
            "concatenated probe ({med_concat:.3}) below FA-{} ({med_single:.3})",
            p + 1
        );
    }
    pass("06 (concatenated probe tops single layers)", t0);
}

// ===========================================================================
// Criterion 5: pseudo-label pretraining lift and depth direction
// ===========================================================================

#[test]
fn acceptance_05_pseudo_label_pretraining_lift_and_depth() {
    let t0 = Instant::now();
    let mut lifts = Vec::new();
    let mut acc_d4 = Vec::new();
    let mut acc_d1 = Vec::new();
    for seed in 1..=5u64 {
        // A harder variant of the benchmark scene: closer prototypes,
        // heavier mixing and noise, so five labels per class cannot
        // saturate and feature quality decides the outcome.
        let mut config = SynthConfig::default_task();
        config.noise_snr_db = Some(12.0);
        config.amplitude_range = (0.1, 0.32);
        config.mixing = Some(MixingConfig {
            fraction: 0.45,
            concentration: 1.0,
        });
        let pair = synth_domain_pair(&config, 200 + seed).unwrap();
        let (cube, labels) = &pair.source;
        let all = extract_patches(cube, labels, 1, PatchSelection::All, DomainTag::Source).unwrap();
        let split = split_labels(labels, 5, seed).unwrap();
        let train = all.subset_by_pixel(labels.width(), &split.train_indices);
        let test = all.subset_by_pixel(labels.width(), &split.test_indices);
        let mut unlabeled = all.clone();
        for l in &mut unlabeled.labels {
            *l = 0;
        }

        let pre_spec =
            parse_config("input-48 → fc-40 → fc-32 → fc-24 → fc-16 → softmax-9").unwrap();
        let pre_cfg = TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.08,
            seed,
            cluster_k: 9,
            cluster_restarts: 50,
            ..TrainConfig::default()
        };
        let pretrained = pretrain_pseudo(&pre_spec, &unlabeled, &pre_cfg, &KMeans::default()).unwrap();

        let tune = |model: &TrainedModel, depth: usize| -> f64 {
            let cfg = TrainConfig {
                epochs: 60,
                batch_size: 16,
                learning_rate: 0.1,
                seed,
                freeze_depth: depth,
                finetune_head: "softmax-6".into(),
                ..TrainConfig::default()
            };
            let tuned = finetune(model, &train, &cfg).unwrap();
            evaluate(&tuned, &test).unwrap().overall_accuracy
        };

        let pre_d4 = tune(&pretrained, 4);
        let pre_d1 = tune(&pretrained, 1);
        let random_init = TrainedModel {
            arch: ModelArch::Single {
                spec: pre_spec.clone(),
                params: init_params(&pre_spec, seed).unwrap(),
            },
            history: Vec::new(),
            provenance: Provenance {
                config_hash: String::new(),
                seed,
            },
        };
        let rand_d4 = tune(&random_init, 4);

        println!("  seed {seed}: pretrained d4 {pre_d4:.3} d1 {pre_d1:.3}, random-init d4 {rand_d4:.3}");
        lifts.push((pre_d4 - rand_d4) * 100.0);
        acc_d4.push(pre_d4);
        acc_d1.push(pre_d1);
    }
    let med_lift = median(&mut lifts);
    assert!(
        med_lift >= 5.0,
        "median pretraining lift {med_lift:.1} points is below the 5-point bar"
    );
    let med_d4 = median(&mut acc_d4);
    let med_d1 = median(&mut acc_d1);
    assert!(
        med_d4 >= med_d1,
        "deeper frozen trunk should not lose in median: depth-4 {med_d4:.3} vs depth-1 {med_d1:.3}"
    );
    pass("05 (pseudo-label pretraining lift and depth direction)", t0);
}

// ===========================================================================
// Criterion 7: active-learning label efficiency
// ===========================================================================

#[test]
fn acceptance_07_entropy_querying_is_label_efficient() {
    let t0 = Instant::now();
    let mut needed_entropy = Vec::new();
    let mut needed_random = Vec::new();
    for seed in 1..=10u64 {
        let config = SynthConfig::default_task();
        let pair = synth_domain_pair(&config, 300 + seed).unwrap();
        let (cube, labels) = &pair.source;
        let all = extract_patches(cube, labels, 1, PatchSelection::All, DomainTag::Source).unwrap();
        let uni_idx: Vec<usize> = (0..all.len()).step_by(2).collect();
        let test_idx: Vec<usize> = (1..all.len()).step_by(2).collect();
        let universe = all.subset(&uni_idx);
        let test = all.subset(&test_idx);

        let spec = parse_config("input-48 → fc-24 → dropout-0.3 → fc-16 → softmax-6").unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 16,
            learning_rate: 0.1,
            seed,
            ..TrainConfig::default()
        };
        let full = train_supervised(&spec, &universe, &cfg).unwrap();
        let full_oa = evaluate(&full, &test).unwrap().overall_accuracy;
        let threshold = 0.9 * full_oa;

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

        let labels_to_threshold = |strategy: QueryStrategy| -> usize {
            let state = ALState::new(labeled.clone(), pool.clone(), 60, 3).unwrap();
            let (curve, final_state) = run_loop(
                &universe,
                state,
                strategy,
                &spec,
                &cfg,
                &ActiveConfig::default(),
                &test,
            )
            .unwrap();
            // Conservation after the full run.
            final_state.check_invariants().unwrap();
            assert_eq!(
                final_state.labeled.len() + final_state.pool.len(),
                universe.len()
            );
            curve
                .iter()
                .find(|p| p.overall_accuracy >= threshold)
                .map(|p| p.labels_used)
                .unwrap_or(usize::MAX)
        };
        let e = labels_to_threshold(QueryStrategy::Entropy);
        let r = labels_to_threshold(QueryStrategy::Random);
        println!("  seed {seed}: full-pool {full_oa:.3}; entropy needs {e}, random needs {r}");
        needed_entropy.push(e);
        needed_random.push(r);
    }
    let med_e = median_usize(&mut needed_entropy);
    let med_r = median_usize(&mut needed_random);
    assert!(
        med_e <= med_r,
        "entropy needs {med_e} labels in median, random needs {med_r}"
    );
    pass("07 (entropy querying label efficiency)", t0);
}

// ===========================================================================
// Criterion 8: augmentation invariants
// ===========================================================================

#[test]
fn acceptance_08_augmentation_invariant_suite() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4800);

    // Dihedral group closure and involution, exact.
    let patch: Vec<f64> = (0..3 * 3 * 2).map(|_| rng.gen_range(0.0..1.0)).collect();
    let variants = dihedral_variants(&patch, 3, 2).unwrap();
    assert_eq!(variants.len(), 8);
    for v in &variants {
        // Composing any group element with any variant stays in the set.
        let composed = dihedral_variants(v, 3, 2).unwrap();
        for c in &composed {
            assert!(
                variants.iter().any(|w| w == c),
                "composition left the dihedral set"
            );
        }
    }
    let r180 = &variants[2];
    assert_eq!(&dihedral_variants(r180, 3, 2).unwrap()[2], &patch);

    // Mixing: identity at weight 1 and the elementwise envelope.
    for _ in 0..50 {
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        assert_eq!(virtual_mix(&a, &b, 3, 3, 1.0).unwrap(), a);
        let w = rng.gen_range(0.0..=1.0);
        let mixed = virtual_mix(&a, &b, 3, 3, w).unwrap();
        for ((m, x), y) in mixed.iter().zip(&a).zip(&b) {
            assert!(*m >= x.min(*y) - 1e-12 && *m <= x.max(*y) + 1e-12);
        }
    }
    // Scaling identity and clipping.
    let s = vec![0.7, 0.2];
    assert_eq!(virtual_scale(&s, 1.0, ValueKind::Reflectance).unwrap(), s);
    assert_eq!(virtual_scale(&s, 2.0, ValueKind::Reflectance).unwrap(), vec![1.0, 0.4]);

    // Occlusion pixel-count exactness.
    let patch: Vec<f64> = (0..4 * 4 * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
    let occluded = random_occlusion(&patch, 4, 3, 0.25, 11).unwrap();
    let changed = (0..16)
        .filter(|&px| occluded[px * 3..px * 3 + 3] != patch[px * 3..px * 3 + 3])
        .count();
    assert_eq!(changed, 4, "a quarter of a 4x4 patch is exactly 4 pixels");
    assert_eq!(random_occlusion(&patch, 4, 3, 0.001, 1).unwrap(), patch);

    // Block pairing balance sanity on a 10-sample 2-class set.
    let set = PatchSet {
        window: 3,
        bands: 1,
        patches: (0..10).map(|i| vec![i as f64; 9]).collect(),
        labels: (0..10).map(|i| if i < 5 { 1 } else { 2 }).collect(),
        origin_coords: (0..10).map(|i| (0, i)).collect(),
        domain: DomainTag::Source,
    };
    let pairs = block_pairs(&set, 3, 5).unwrap();
    let same = pairs.labels.iter().filter(|l| matches!(l, PairLabel::Same(_))).count();
    let diff = pairs.labels.iter().filter(|l| matches!(l, PairLabel::Different)).count();
    assert_eq!((same, diff), (20, 20), "2*C(5,2) same pairs, balanced");

    // Pseudo-label expansion equals an exhaustive neighbor-scan oracle on
    // synthetic two-class blob data.
    let blob = |rng: &mut ChaCha8Rng, cx: f64, n: usize, class: u32, base: usize| -> Vec<(Vec<f64>, u32, (usize, usize))> {
        (0..n)
            .map(|i| {
                let spectrum: Vec<f64> = (0..4).map(|_| cx + rng.gen_range(-0.1..0.1)).collect();
                (spectrum, class, (base + i / 4, (base + i) % 7))
            })
            .collect()
    };
    let mut labeled_rows = blob(&mut rng, 0.2, 10, 1, 0);
    labeled_rows.extend(blob(&mut rng, 0.8, 10, 2, 3));
    let mut pool_rows = blob(&mut rng, 0.25, 8, 0, 1);
    pool_rows.extend(blob(&mut rng, 0.75, 8, 0, 4));
    let as_set = |rows: &[(Vec<f64>, u32, (usize, usize))]| PatchSet {
        window: 1,
        bands: 4,
        patches: rows.iter().map(|(p, _, _)| p.clone()).collect(),
        labels: rows.iter().map(|(_, l, _)| *l).collect(),
        origin_coords: rows.iter().map(|(_, _, c)| *c).collect(),
        domain: DomainTag::Source,
    };
    let labeled_set = as_set(&labeled_rows);
    let pool_set = as_set(&pool_rows);
    let (k, radius) = (3usize, 3.5f64);
    let promoted = knn_pseudo_expand(&labeled_set, &pool_set, k, radius).unwrap();

    // Oracle: exhaustive scan, same unanimity rule.
    let mut expected = Vec::new();
    for p in 0..pool_set.len() {
        let (pr, pc) = pool_set.origin_coords[p];
        let mut in_range: Vec<(f64, usize)> = (0..labeled_set.len())
            .filter(|&l| {
                let (lr, lc) = labeled_set.origin_coords[l];
                let dr = pr as f64 - lr as f64;
                let dc = pc as f64 - lc as f64;
                (dr * dr + dc * dc).sqrt() <= radius
            })
            .map(|l| {
                let d: f64 = pool_set.patches[p]
                    .iter()
                    .zip(&labeled_set.patches[l])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, l)
            })
            .collect();
        if in_range.len() < k {
            continue;
        }
        in_range.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let first = labeled_set.labels[in_range[0].1];
        if in_range[..k].iter().all(|&(_, l)| labeled_set.labels[l] == first) {
            expected.push((p, first));
        }
    }
    assert_eq!(promoted, expected, "promotions must match the exhaustive oracle");
    assert!(!promoted.is_empty(), "the blob construction should promote something");

    pass("08 (augmentation invariant suite)", t0);
}

// ===========================================================================
// Criterion 9: Monte Carlo dropout sanity
// ===========================================================================

#[test]
fn acceptance_09_mc_dropout_sanity() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4900);

    // Nonnegativity across random models and inputs.
    let spec = parse_config("input-6 → fc-10 → dropout-0.5 → fc-8 → softmax-4").unwrap();
    for round in 0..5 {
        let params = init_params(&spec, 90 + round).unwrap();
        let set = PatchSet {
            window: 1,
            bands: 6,
            patches: (0..10)
                .map(|_| (0..6).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect(),
            labels: vec![0; 10],
            origin_coords: (0..10).map(|i| (0, i)).collect(),
            domain: DomainTag::Source,
        };
        let mc = mc_forward(&spec, &params, &set, 16, round).unwrap();
        for &mi in &mc.mutual_info {
            assert!(mi >= -1e-9, "mutual information {mi} below tolerance");
        }
    }

    // Exactly zero without stochasticity.
    let zero_rate = parse_config("input-6 → fc-10 → dropout-0.0 → softmax-4").unwrap();
    let params = init_params(&zero_rate, 7).unwrap();
    let set = PatchSet {
        window: 1,
        bands: 6,
        patches: vec![vec![0.3; 6], vec![0.9, 0.1, 0.5, 0.2, 0.8, 0.4]],
        labels: vec![0, 0],
        origin_coords: vec![(0, 0), (0, 1)],
        domain: DomainTag::Source,
    };
    let mc = mc_forward(&zero_rate, &params, &set, 32, 3).unwrap();
    assert!(mc.mutual_info.iter().all(|&m| m == 0.0));
    let params2 = init_params(&spec, 8).unwrap();
    let mc = mc_forward(&spec, &params2, &set, 1, 3).unwrap();
    assert!(mc.mutual_info.iter().all(|&m| m == 0.0));

    // Positive disagreement on a trained toy model at rate 0.5, T = 32.
    let mut config = SynthConfig::identity(3, 12, 12, 6);
    config.noise_snr_db = Some(20.0);
    let pair = synth_domain_pair(&config, 9).unwrap();
    let all = extract_patches(&pair.source.0, &pair.source.1, 1, PatchSelection::All, DomainTag::Source).unwrap();
    let toy_spec = parse_config("input-6 → fc-10 → dropout-0.5 → fc-8 → softmax-3").unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 16,
        learning_rate: 0.1,
        seed: 2,
        ..TrainConfig::default()
    };
    let model = train_supervised(&toy_spec, &all, &cfg).unwrap();
    let (mspec, mparams) = model.single().unwrap();
    let mc = mc_forward(mspec, mparams, &all.subset(&(0..20).collect::<Vec<_>>()), 32, 5).unwrap();
    let mean_mi: f64 = mc.mutual_info.iter().sum::<f64>() / mc.mutual_info.len() as f64;
    assert!(mean_mi > 0.0, "trained model at rate 0.5 should disagree across passes");

    pass("09 (Monte Carlo dropout sanity)", t0);
}

// ===========================================================================
// Criterion 10: config grammar fidelity on the published table strings
// ===========================================================================

#[test]
fn acceptance_10_grammar_fidelity() {
    let t0 = Instant::now();

    // Nine-class summary: four conv(+pool) stages, two recurrent, two
    // dense, softmax-9 over a 103-band input.
    let table1 = "input-103 → conv3-32 → conv3-32 → conv3-64 → conv3-64 \
                  → recur-256 → recur-512 → fc-64 → fc-64 → softmax-9";
    let spec = parse_config(table1).unwrap();
    let rendered = render_config(&spec);
    let canonical: String = table1.split_whitespace().collect::<Vec<_>>().join(" ");
    assert_eq!(rendered, canonical);
    assert_eq!(parse_config(&rendered).unwrap(), spec);

    let count = |spec: &NetworkSpec, f: fn(&LayerSpec) -> bool| {
        spec.layers.iter().filter(|l| f(l)).count()
    };
    assert_eq!(spec.input_bands, 103);
    assert_eq!(count(&spec, |l| matches!(l, LayerSpec::Conv { .. })), 4);
    assert_eq!(count(&spec, |l| matches!(l, LayerSpec::MaxPool)), 4);
    assert_eq!(
        spec.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Recurrent { state_dim } => Some(*state_dim),
                _ => None,
            })
            .collect::<Vec<_>>(),
        vec![256, 512]
    );
    assert_eq!(
        spec.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { units } => Some(*units),
                _ => None,
            })
            .collect::<Vec<_>>(),
        vec![64, 64]
    );
    assert_eq!(spec.softmax_classes(), Some(9));

    // Building it materializes weights whose shapes follow the widths.
    let spec = spec.with_window(5);
    let params = init_params(&spec, 0).unwrap();
    match &params.layers[0] {
        LayerParams::Conv { w, .. } => assert_eq!(w.dims, vec![3, 3, 103, 32]),
        other => panic!("expected conv weights, got {other:?}"),
    }

    // Dual-branch summary: five conv(+pool) stages per branch with a
    // recurrent tail, six aligned pairs, and a 12-class fused head.
    let street = "input-274 → conv4-128 → conv4-128 → conv4-128 → conv4-128 → conv4-128 → recur-64";
    let aerial = "input-360 → conv5-512 → conv5-512 → conv5-512 → conv5-512 → conv5-512 → recur-128";
    let street_spec = parse_config(street).unwrap().with_window(9);
    let aerial_spec = parse_config(aerial).unwrap().with_window(9);
    assert_eq!(render_config(&street_spec), street);
    assert_eq!(render_config(&aerial_spec), aerial);

    // Tap each pooled conv stage (odd indices after implicit pooling) and
    // the recurrent tail.
    let aligned: Vec<(usize, usize)> = vec![(1, 1), (3, 3), (5, 5), (7, 7), (9, 9), (10, 10)];
    let fann = FannSpec::new(
        street_spec,
        aerial_spec,
        aligned,
        32,
        vec![LayerSpec::Softmax { classes: 12 }],
    )
    .unwrap();
    assert_eq!(fann.aligned_pairs.len(), 6);
    assert_eq!(fann.head_classes(), 12);

    let street_params = init_params(&fann.source_branch, 1).unwrap();
    let aerial_params = init_params(&fann.target_branch, 1).unwrap();
    match &street_params.layers[0] {
        LayerParams::Conv { w, .. } => assert_eq!(w.dims, vec![4, 4, 274, 128]),
        other => panic!("expected conv weights, got {other:?}"),
    }
    match &aerial_params.layers[2] {
        LayerParams::Conv { w, .. } => assert_eq!(w.dims, vec![5, 5, 512, 512]),
        other => panic!("expected conv weights, got {other:?}"),
    }
    match &aerial_params.layers[10] {
        LayerParams::Gru { uz, .. } => assert_eq!(uz.dims, vec![128, 128]),
        other => panic!("expected recurrent weights, got {other:?}"),
    }

    pass("10 (config grammar fidelity)", t0);
}
