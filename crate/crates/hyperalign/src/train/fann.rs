//! The dual-branch adaptation trainer.
//!
//! Each step runs both branches on their own mini-batches, projects the
//! tapped activations of every aligned pair into the shared latent space,
//! applies the alignment loss there with that pair's trade-off weight, adds
//! cross entropy from the fused head over the concatenated projections, and
//! descends the summed loss through heads, projections, and branches alike.
//!
//! Trade-off weights are re-estimated from feature snapshots on a held-out
//! slice every `beta_refresh` epochs; running the discriminator every step
//! would dominate the budget. Estimation happens in the projected space
//! because raw taps of the two branches generally have different widths.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::{DomainTag, PatchSet};
use crate::datl::{datl_loss_grad, estimate_beta, AdaptationConfig, BetaMode, FeatureBatch};
use crate::error::{Error, Result};
use crate::net::params::uniform_tensor;
use crate::net::{
    backward, forward, init_params, sample_tensor, DropoutMode, FannSpec, ForwardPass,
    NetworkSpec, ParamStore, TapPoint,
};
use crate::tensor::Tensor;

use super::supervised::cross_entropy_grad;
use super::{argmax_labels, EpochRecord, ModelArch, Provenance, TrainConfig, TrainedModel};

/// A learned linear map into the shared latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    /// (in, out) weight matrix.
    pub w: Tensor,
    pub b: Vec<f64>,
}

impl LinearMap {
    fn init(rng: &mut ChaCha8Rng, din: usize, dout: usize) -> Self {
        LinearMap {
            w: uniform_tensor(rng, &[din, dout], din),
            b: vec![0.0; dout],
        }
    }

    fn zeros_like(&self) -> Self {
        LinearMap {
            w: Tensor::zeros(&self.w.dims),
            b: vec![0.0; self.b.len()],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (din, dout) = (self.w.dims[0], self.w.dims[1]);
        debug_assert_eq!(x.len(), din);
        let mut out = self.b.clone();
        for (d, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = d * dout;
            for u in 0..dout {
                out[u] += self.w.data[row + u] * v;
            }
        }
        out
    }

    /// Accumulate gradients for one sample and return d input.
    fn backward(&self, x: &[f64], dz: &[f64], grad: &mut LinearMap) -> Vec<f64> {
        let (din, dout) = (self.w.dims[0], self.w.dims[1]);
        let mut dx = vec![0.0; din];
        for d in 0..din {
            let row = d * dout;
            let mut acc = 0.0;
            for u in 0..dout {
                grad.w.data[row + u] += x[d] * dz[u];
                acc += self.w.data[row + u] * dz[u];
            }
            dx[d] = acc;
        }
        for (g, &v) in grad.b.iter_mut().zip(dz) {
            *g += v;
        }
        dx
    }

    fn sgd_step(&mut self, grad: &LinearMap, lr: f64) {
        for (p, g) in self.w.data.iter_mut().zip(&grad.w.data) {
            *p -= lr * g;
        }
        for (p, g) in self.b.iter_mut().zip(&grad.b) {
            *p -= lr * g;
        }
    }
}

/// All weights of a dual-branch model.
#[derive(Debug, Clone)]
pub struct FannParams {
    pub source: ParamStore,
    pub target: ParamStore,
    pub proj_source: Vec<LinearMap>,
    pub proj_target: Vec<LinearMap>,
    pub head: ParamStore,
    /// Most recent per-pair trade-off weights.
    pub betas: Vec<f64>,
}

/// Initialize all adaptation weights. When the two branches share one
/// architecture their weights (and the per-pair projections) start as
/// copies: identical inputs then produce identical latents, so the domain
/// discrepancy the trade-off estimator sees is the data's, not the
/// initialization's. Structurally different branches get independent draws.
pub fn init_fann_params(spec: &FannSpec, seed: u64) -> Result<FannParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37));
    let s_shapes = spec.source_branch.layer_shapes();
    let t_shapes = spec.target_branch.layer_shapes();
    let twins = spec.source_branch.layers == spec.target_branch.layers
        && spec.source_branch.input_bands == spec.target_branch.input_bands
        && spec.source_branch.input_window == spec.target_branch.input_window;

    let mut proj_source = Vec::new();
    let mut proj_target = Vec::new();
    for &(ls, lt) in &spec.aligned_pairs {
        let ps = LinearMap::init(&mut rng, s_shapes[ls].numel(), spec.shared_dim);
        let pt = if twins {
            ps.clone()
        } else {
            LinearMap::init(&mut rng, t_shapes[lt].numel(), spec.shared_dim)
        };
        proj_source.push(ps);
        proj_target.push(pt);
    }
    let source = init_params(&spec.source_branch, seed)?;
    let target = if twins {
        source.clone()
    } else {
        init_params(&spec.target_branch, seed.wrapping_add(1))?
    };
    Ok(FannParams {
        source,
        target,
        proj_source,
        proj_target,
        head: init_params(&spec.head_spec(), seed.wrapping_add(2))?,
        betas: vec![0.5; spec.aligned_pairs.len()],
    })
}

/// Raw (pre-normalization) projected latent of one pass at pair `p`.
fn project_raw(
    spec: &FannSpec,
    params: &FannParams,
    pass: &ForwardPass,
    p: usize,
    domain: DomainTag,
) -> Vec<f64> {
    let (layer, proj) = match domain {
        DomainTag::Source => (spec.aligned_pairs[p].0, &params.proj_source[p]),
        DomainTag::Target => (spec.aligned_pairs[p].1, &params.proj_target[p]),
    };
    proj.apply(&pass.tap(TapPoint::Layer(layer)).data)
}

/// The shared latent space is the unit sphere: the class-ratio objective is
/// scale-hungry (inflating every distance drives it without bound), so the
/// projected latents are L2-normalized before alignment, classification,
/// and discrepancy estimation.
fn normalize(z: &[f64]) -> (Vec<f64>, f64) {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
    (z.iter().map(|v| v / norm).collect(), norm)
}

/// Gradient through the normalization: given d/d(unit), return d/d(raw).
fn normalize_backward(unit: &[f64], norm: f64, d_unit: &[f64]) -> Vec<f64> {
    let dot: f64 = unit.iter().zip(d_unit).map(|(u, d)| u * d).sum();
    unit.iter()
        .zip(d_unit)
        .map(|(u, d)| (d - u * dot) / norm)
        .collect()
}

/// Normalized projected latent of one pass at pair `p`.
fn project_pass(
    spec: &FannSpec,
    params: &FannParams,
    pass: &ForwardPass,
    p: usize,
    domain: DomainTag,
) -> Vec<f64> {
    normalize(&project_raw(spec, params, pass, p, domain)).0
}

fn branch_of(spec: &FannSpec, domain: DomainTag) -> &NetworkSpec {
    match domain {
        DomainTag::Source => &spec.source_branch,
        DomainTag::Target => &spec.target_branch,
    }
}

fn branch_params_of(params: &FannParams, domain: DomainTag) -> &ParamStore {
    match domain {
        DomainTag::Source => &params.source,
        DomainTag::Target => &params.target,
    }
}

/// Latent features (projected taps) of a whole set at one pair, or the
/// concatenation over all pairs.
pub fn fann_features(
    spec: &FannSpec,
    params: &FannParams,
    set: &PatchSet,
    point: ProbePoint,
) -> Result<Tensor> {
    let branch = branch_of(spec, set.domain);
    let store = branch_params_of(params, set.domain);
    let pairs = spec.aligned_pairs.len();
    let dim = match point {
        ProbePoint::Pair(p) => {
            if p >= pairs {
                return Err(Error::argument(format!(
                    "pair {p} out of range ({pairs} aligned pairs)"
                )));
            }
            spec.shared_dim
        }
        ProbePoint::Concatenated => spec.shared_dim * pairs,
    };
    let mut out = Tensor::zeros(&[set.len(), dim]);
    for i in 0..set.len() {
        let pass = forward(branch, store, &sample_tensor(set, i), DropoutMode::Off)?;
        match point {
            ProbePoint::Pair(p) => {
                let z = project_pass(spec, params, &pass, p, set.domain);
                out.row_mut(i).copy_from_slice(&z);
            }
            ProbePoint::Concatenated => {
                let mut offset = 0;
                for p in 0..pairs {
                    let z = project_pass(spec, params, &pass, p, set.domain);
                    out.row_mut(i)[offset..offset + spec.shared_dim].copy_from_slice(&z);
                    offset += spec.shared_dim;
                }
            }
        }
    }
    Ok(out)
}

/// Predicted labels for a set routed through its domain's branch and the
/// fused head.
pub fn fann_predict(spec: &FannSpec, params: &FannParams, set: &PatchSet) -> Result<Vec<u32>> {
    let concat = fann_features(spec, params, set, ProbePoint::Concatenated)?;
    let head_spec = spec.head_spec();
    let mut probs = Tensor::zeros(&[set.len(), spec.head_classes()]);
    for i in 0..set.len() {
        let x = Tensor::from_vec(&[1, 1, concat.dims[1]], concat.row(i).to_vec());
        let pass = forward(&head_spec, &params.head, &x, DropoutMode::Off)?;
        probs.row_mut(i).copy_from_slice(&pass.output().data);
    }
    Ok(argmax_labels(&probs))
}

/// Train a dual-branch adaptation model on labeled source and (few)
/// labeled target samples. History records cross entropy, each pair's
/// alignment component and trade-off weight, and the summed total.
pub fn train_fann(
    spec: &FannSpec,
    source_labeled: &PatchSet,
    target_labeled: &PatchSet,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    spec.validate()?;
    check_branch(&spec.source_branch, source_labeled, "source")?;
    check_branch(&spec.target_branch, target_labeled, "target")?;
    let classes = spec.head_classes();
    for (set, name) in [(source_labeled, "source"), (target_labeled, "target")] {
        if set.labels.iter().any(|&l| l == 0) {
            return Err(Error::argument(format!("{name} set has unlabeled samples")));
        }
        if let Some(&max) = set.labels.iter().max() {
            if max as usize > classes {
                return Err(Error::Structure(format!(
                    "{name} labels go up to {max} but the head has {classes} classes"
                )));
            }
        }
    }

    let pairs = spec.aligned_pairs.len();
    let weights: Vec<f64> = (0..pairs)
        .map(|p| cfg.datl_weights.get(p).copied().unwrap_or(1.0))
        .collect();

    let mut params = init_fann_params(spec, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Hold out a slice of each domain for trade-off estimation.
    let holdout_split = |n: usize, rng: &mut ChaCha8Rng| -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let mut hold = (n as f64 * cfg.beta_holdout).floor() as usize;
        if hold + 2 > n {
            hold = n.saturating_sub(2);
        }
        let held = idx[..hold].to_vec();
        let train = idx[hold..].to_vec();
        (train, held)
    };
    let estimated = matches!(cfg.adaptation.beta_mode, BetaMode::PadEstimated);
    let (s_train_idx, s_hold_idx) = if estimated {
        holdout_split(source_labeled.len(), &mut rng)
    } else {
        ((0..source_labeled.len()).collect(), Vec::new())
    };
    let (t_train_idx, t_hold_idx) = if estimated {
        holdout_split(target_labeled.len(), &mut rng)
    } else {
        ((0..target_labeled.len()).collect(), Vec::new())
    };
    let s_train = source_labeled.subset(&s_train_idx);
    let t_train = target_labeled.subset(&t_train_idx);
    let s_hold = source_labeled.subset(&s_hold_idx);
    let t_hold = target_labeled.subset(&t_hold_idx);
    // Empty holdout (tiny sets): estimate on the training slice itself.
    let (s_beta_set, t_beta_set) = if s_hold.is_empty() || t_hold.is_empty() {
        (&s_train, &t_train)
    } else {
        (&s_hold, &t_hold)
    };

    if let BetaMode::Fixed(beta) = cfg.adaptation.beta_mode {
        params.betas = vec![beta; pairs];
    }

    // Each branch first learns its own domain under a throwaway softmax;
    // the adaptation modules then connect feature spaces that already carry
    // class structure.
    if cfg.pretrain_epochs > 0 {
        pretrain_branch(
            &spec.source_branch,
            &mut params.source,
            &s_train,
            classes,
            cfg,
            cfg.seed.wrapping_add(11),
        )?;
        pretrain_branch(
            &spec.target_branch,
            &mut params.target,
            &t_train,
            classes,
            cfg,
            cfg.seed.wrapping_add(12),
        )?;
    }

    let head_spec = spec.head_spec();
    let ns = s_train.len();
    let nt = t_train.len();
    let steps_per_epoch = ns.max(nt).div_ceil(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if estimated && epoch % cfg.beta_refresh == 0 {
            refresh_betas(
                spec,
                &mut params,
                s_beta_set,
                t_beta_set,
                &cfg.adaptation,
                rng.gen(),
            )?;
        }

        let mut s_order: Vec<usize> = (0..ns).collect();
        let mut t_order: Vec<usize> = (0..nt).collect();
        s_order.shuffle(&mut rng);
        t_order.shuffle(&mut rng);

        let mut ce_sum = 0.0;
        let mut ce_count = 0usize;
        let mut align_sums = vec![0.0; pairs];

        for step in 0..steps_per_epoch {
            let s_batch: Vec<usize> = (0..cfg.batch_size.min(ns))
                .map(|k| s_order[(step * cfg.batch_size + k) % ns])
                .collect();
            let t_batch: Vec<usize> = (0..cfg.batch_size.min(nt))
                .map(|k| t_order[(step * cfg.batch_size + k) % nt])
                .collect();

            // Forward both branches.
            let s_passes: Vec<ForwardPass> = s_batch
                .iter()
                .map(|&i| {
                    forward(
                        &spec.source_branch,
                        &params.source,
                        &sample_tensor(&s_train, i),
                        DropoutMode::Sample(&mut rng),
                    )
                })
                .collect::<Result<_>>()?;
            let t_passes: Vec<ForwardPass> = t_batch
                .iter()
                .map(|&i| {
                    forward(
                        &spec.target_branch,
                        &params.target,
                        &sample_tensor(&t_train, i),
                        DropoutMode::Sample(&mut rng),
                    )
                })
                .collect::<Result<_>>()?;

            // Projected latents per pair: unit-sphere values for the losses,
            // raw norms kept for the normalization backward.
            let project_batch = |passes: &[ForwardPass],
                                 domain: DomainTag,
                                 params: &FannParams|
             -> (Vec<Tensor>, Vec<Vec<f64>>) {
                let mut units = Vec::with_capacity(pairs);
                let mut norms = Vec::with_capacity(pairs);
                for p in 0..pairs {
                    let mut z = Tensor::zeros(&[passes.len(), spec.shared_dim]);
                    let mut ns = Vec::with_capacity(passes.len());
                    for (row, pass) in passes.iter().enumerate() {
                        let raw = project_raw(spec, params, pass, p, domain);
                        let (unit, norm) = normalize(&raw);
                        z.row_mut(row).copy_from_slice(&unit);
                        ns.push(norm);
                    }
                    units.push(z);
                    norms.push(ns);
                }
                (units, norms)
            };
            let (z_source, n_source) = project_batch(&s_passes, DomainTag::Source, &params);
            let (z_target, n_target) = project_batch(&t_passes, DomainTag::Target, &params);
            let s_labels: Vec<u32> = s_batch.iter().map(|&i| s_train.labels[i]).collect();
            let t_labels: Vec<u32> = t_batch.iter().map(|&i| t_train.labels[i]).collect();

            // Gradient accumulators on the latents.
            let mut dz_source: Vec<Tensor> = z_source
                .iter()
                .map(|z| Tensor::zeros(&z.dims))
                .collect();
            let mut dz_target: Vec<Tensor> = z_target
                .iter()
                .map(|z| Tensor::zeros(&z.dims))
                .collect();

            // Alignment terms.
            for p in 0..pairs {
                if weights[p] == 0.0 {
                    continue;
                }
                let sb = FeatureBatch::new(DomainTag::Source, z_source[p].clone(), s_labels.clone())?;
                let tb = FeatureBatch::new(DomainTag::Target, z_target[p].clone(), t_labels.clone())?;
                match datl_loss_grad(&sb, &tb, params.betas[p], cfg.adaptation.stability_shift) {
                    Ok((loss, ds, dt)) => {
                        align_sums[p] += loss.value;
                        for (acc, g) in dz_source[p].data.iter_mut().zip(&ds.data) {
                            *acc += weights[p] * g;
                        }
                        for (acc, g) in dz_target[p].data.iter_mut().zip(&dt.data) {
                            *acc += weights[p] * g;
                        }
                    }
                    // A batch can lack class support entirely (every query
                    // skipped); drop the term for this step rather than
                    // aborting the run.
                    Err(Error::DegenerateSupport(_)) => {}
                    Err(e) => return Err(e),
                }
            }

            // Fused head over concatenated latents, both domains.
            let total_batch = s_batch.len() + t_batch.len();
            let mut head_grads = params.head.zeros_like();
            let concat_dim = spec.shared_dim * pairs;
            let run_head = |zs: &[Tensor],
                                dzs: &mut [Tensor],
                                row: usize,
                                label: u32,
                                params: &FannParams,
                                head_grads: &mut ParamStore,
                                rng: &mut ChaCha8Rng|
             -> Result<f64> {
                let mut x = vec![0.0; concat_dim];
                for p in 0..pairs {
                    x[p * spec.shared_dim..(p + 1) * spec.shared_dim]
                        .copy_from_slice(&zs[p].row(row)[..]);
                }
                let xt = Tensor::from_vec(&[1, 1, concat_dim], x);
                let pass = forward(&head_spec, &params.head, &xt, DropoutMode::Sample(rng))?;
                let (loss, d_probs) = cross_entropy_grad(&pass.output().data, label);
                let d_out = Tensor::from_vec(&pass.output().dims, d_probs);
                let (g, d_x) = backward(&head_spec, &params.head, &pass, &d_out, &[])?;
                head_grads.accumulate(&g, 1.0 / total_batch as f64);
                for p in 0..pairs {
                    let slice = &d_x.data[p * spec.shared_dim..(p + 1) * spec.shared_dim];
                    for (acc, g) in dzs[p].row_mut(row).iter_mut().zip(slice) {
                        *acc += g / total_batch as f64;
                    }
                }
                Ok(loss)
            };
            for (row, &i) in s_batch.iter().enumerate() {
                ce_sum += run_head(
                    &z_source,
                    &mut dz_source,
                    row,
                    s_train.labels[i],
                    &params,
                    &mut head_grads,
                    &mut rng,
                )?;
                ce_count += 1;
            }
            for (row, &i) in t_batch.iter().enumerate() {
                ce_sum += run_head(
                    &z_target,
                    &mut dz_target,
                    row,
                    t_train.labels[i],
                    &params,
                    &mut head_grads,
                    &mut rng,
                )?;
                ce_count += 1;
            }

            // Backward through projections and branches.
            let mut s_grads = params.source.zeros_like();
            let mut t_grads = params.target.zeros_like();
            let mut ps_grads: Vec<LinearMap> =
                params.proj_source.iter().map(|m| m.zeros_like()).collect();
            let mut pt_grads: Vec<LinearMap> =
                params.proj_target.iter().map(|m| m.zeros_like()).collect();

            for (row, pass) in s_passes.iter().enumerate() {
                let mut injected = Vec::with_capacity(pairs);
                for p in 0..pairs {
                    let tap_layer = spec.aligned_pairs[p].0;
                    let tap = pass.tap(TapPoint::Layer(tap_layer));
                    let d_raw = normalize_backward(
                        z_source[p].row(row),
                        n_source[p][row],
                        dz_source[p].row(row),
                    );
                    let d_tap =
                        params.proj_source[p].backward(&tap.data, &d_raw, &mut ps_grads[p]);
                    injected.push((tap_layer, Tensor::from_vec(&tap.dims, d_tap)));
                }
                let zeros = Tensor::zeros(&pass.output().dims);
                let (g, _) = backward(&spec.source_branch, &params.source, pass, &zeros, &injected)?;
                s_grads.accumulate(&g, 1.0);
            }
            for (row, pass) in t_passes.iter().enumerate() {
                let mut injected = Vec::with_capacity(pairs);
                for p in 0..pairs {
                    let tap_layer = spec.aligned_pairs[p].1;
                    let tap = pass.tap(TapPoint::Layer(tap_layer));
                    let d_raw = normalize_backward(
                        z_target[p].row(row),
                        n_target[p][row],
                        dz_target[p].row(row),
                    );
                    let d_tap =
                        params.proj_target[p].backward(&tap.data, &d_raw, &mut pt_grads[p]);
                    injected.push((tap_layer, Tensor::from_vec(&tap.dims, d_tap)));
                }
                let zeros = Tensor::zeros(&pass.output().dims);
                let (g, _) = backward(&spec.target_branch, &params.target, pass, &zeros, &injected)?;
                t_grads.accumulate(&g, 1.0);
            }

            // Global-norm clip: the alignment ratio has no lower bound, so
            // a successful run would otherwise inflate features without
            // limit until they overflow.
            let mut lr = cfg.learning_rate;
            if cfg.grad_clip > 0.0 {
                let mut sq = 0.0;
                for store in [&s_grads, &t_grads, &head_grads] {
                    sq += store
                        .flatten()
                        .iter()
                        .map(|g| g * g)
                        .sum::<f64>();
                }
                for maps in [&ps_grads, &pt_grads] {
                    for m in maps {
                        sq += m.w.data.iter().map(|g| g * g).sum::<f64>();
                        sq += m.b.iter().map(|g| g * g).sum::<f64>();
                    }
                }
                let norm = sq.sqrt();
                if norm > cfg.grad_clip {
                    lr *= cfg.grad_clip / norm;
                }
            }
            params.source.sgd_step(&s_grads, lr, None);
            params.target.sgd_step(&t_grads, lr, None);
            params.head.sgd_step(&head_grads, lr, None);
            for (m, g) in params.proj_source.iter_mut().zip(&ps_grads) {
                m.sgd_step(g, lr);
            }
            for (m, g) in params.proj_target.iter_mut().zip(&pt_grads) {
                m.sgd_step(g, lr);
            }
            if cfg.weight_decay > 0.0 {
                let shrink = 1.0 - cfg.learning_rate * cfg.weight_decay;
                params.source.decay_weights(shrink);
                params.target.decay_weights(shrink);
                for maps in [&mut params.proj_source, &mut params.proj_target] {
                    for m in maps {
                        for v in m.w.data.iter_mut() {
                            *v *= shrink;
                        }
                    }
                }
            }
        }

        let ce = ce_sum / ce_count.max(1) as f64;
        let mut components = vec![("total".into(), 0.0), ("ce".into(), ce)];
        let mut total = ce;
        for p in 0..pairs {
            let align = align_sums[p] / steps_per_epoch as f64;
            total += weights[p] * align;
            components.push((format!("align_{}", p + 1), align));
        }
        for p in 0..pairs {
            components.push((format!("beta_{}", p + 1), params.betas[p]));
        }
        components[0].1 = total;
        history.push(EpochRecord { epoch, components });
    }

    Ok(TrainedModel {
        arch: ModelArch::Fann {
            spec: spec.clone(),
            params,
        },
        history,
        provenance: Provenance {
            config_hash: cfg.hash(),
            seed: cfg.seed,
        },
    })
}

/// Supervised warm-up of one branch on its own labels; the temporary
/// classifier head is discarded, only trunk weights persist.
fn pretrain_branch(
    branch: &NetworkSpec,
    store: &mut ParamStore,
    labeled: &PatchSet,
    classes: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<()> {
    let mut spec = branch.clone();
    spec.layers.push(crate::net::LayerSpec::Softmax { classes });
    let head = init_params(
        &NetworkSpec {
            input_bands: branch.output_shape().numel(),
            input_window: 1,
            layers: vec![crate::net::LayerSpec::Softmax { classes }],
            auto_pool: false,
        },
        seed,
    )?;
    let mut params = ParamStore {
        seed: store.seed,
        layers: store
            .layers
            .iter()
            .cloned()
            .chain(head.layers.into_iter())
            .collect(),
    };
    let pre_cfg = TrainConfig {
        epochs: cfg.pretrain_epochs,
        seed,
        ..cfg.clone()
    };
    super::supervised::run_classifier_sgd(
        &spec,
        &mut params,
        labeled,
        &pre_cfg,
        None,
        cfg.pretrain_epochs,
    )?;
    for (dst, src) in store.layers.iter_mut().zip(&params.layers) {
        *dst = src.clone();
    }
    Ok(())
}

fn check_branch(branch: &NetworkSpec, set: &PatchSet, name: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::argument(format!("{name} set is empty")));
    }
    if branch.input_bands != set.bands || branch.input_window != set.window {
        return Err(Error::Shape {
            layer: format!("{name} branch input"),
            msg: format!(
                "branch expects window {} x bands {}, set has window {} x bands {}",
                branch.input_window, branch.input_bands, set.window, set.bands
            ),
        });
    }
    Ok(())
}

fn refresh_betas(
    spec: &FannSpec,
    params: &mut FannParams,
    s_set: &PatchSet,
    t_set: &PatchSet,
    adaptation: &AdaptationConfig,
    seed: u64,
) -> Result<()> {
    let total = s_set.len() + t_set.len();
    if total < 2 || s_set.is_empty() || t_set.is_empty() {
        return Ok(()); // keep previous weights
    }
    let mut cfg = adaptation.clone();
    cfg.pad_folds = cfg.pad_folds.min(total).max(2);
    for p in 0..spec.aligned_pairs.len() {
        let s_feats = fann_features(spec, params, s_set, ProbePoint::Pair(p))?;
        let t_feats = fann_features(spec, params, t_set, ProbePoint::Pair(p))?;
        let sb = FeatureBatch::new(DomainTag::Source, s_feats, vec![0; s_set.len()])?;
        let tb = FeatureBatch::new(DomainTag::Target, t_feats, vec![0; t_set.len()])?;
        params.betas[p] = estimate_beta(&sb, &tb, &cfg, seed.wrapping_add(p as u64))?;
    }
    Ok(())
}

/// Which aligned features a probe reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbePoint {
    /// One aligned pair (0-based).
    Pair(usize),
    /// All pairs concatenated.
    Concatenated,
}

/// Fit a softmax probe on the chosen aligned features of the training
/// splits (source + target) and report overall accuracy on the target test
/// split. The probe is a fresh single-layer classifier; branch and
/// projection weights stay untouched.
pub fn layer_probe(
    model: &TrainedModel,
    point: ProbePoint,
    source_train: &PatchSet,
    target_train: &PatchSet,
    target_test: &PatchSet,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (spec, params) = model.fann()?;
    let s_feats = fann_features(spec, params, source_train, point)?;
    let t_feats = fann_features(spec, params, target_train, point)?;
    let e_feats = fann_features(spec, params, target_test, point)?;

    let dim = s_feats.dims[1];
    let as_set = |feats: &Tensor, labels: &[u32], domain: DomainTag| -> PatchSet {
        PatchSet {
            window: 1,
            bands: dim,
            patches: (0..feats.dims[0]).map(|i| feats.row(i).to_vec()).collect(),
            labels: labels.to_vec(),
            origin_coords: (0..feats.dims[0]).map(|i| (0, i)).collect(),
            domain,
        }
    };
    let mut train = as_set(&s_feats, &source_train.labels, DomainTag::Source);
    let t_train_set = as_set(&t_feats, &target_train.labels, DomainTag::Target);
    train.patches.extend(t_train_set.patches);
    train.labels.extend(t_train_set.labels);
    train
        .origin_coords
        .extend((0..target_train.len()).map(|i| (1, i)));
    let test = as_set(&e_feats, &target_test.labels, DomainTag::Target);

    let probe_spec = NetworkSpec::new(
        dim,
        vec![crate::net::LayerSpec::Softmax {
            classes: spec.head_classes(),
        }],
    )?;
    let probe_cfg = TrainConfig {
        epochs: cfg.epochs.max(60),
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let probe = super::train_supervised(&probe_spec, &train, &probe_cfg)?;
    Ok(super::evaluate(&probe, &test)?.overall_accuracy)
}
