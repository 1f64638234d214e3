//! Command implementations behind the CLI: synthetic-scene generation,
//! experiment runs across seeds, feature export, and report rendering.
//! Every artifact lands under the configured output directory; seeds write
//! to per-seed subdirectories so parallel workers would never contend.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::{curve_to_csv, run_loop, ALState};
use crate::augment;
use crate::cube::{
    extract_patches, load_cube, load_labels, split_labels, synth_domain_pair, write_cube,
    write_labels, DomainPair, DomainTag, HyperCube, LabelMap, PatchSelection, PatchSet,
};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, TrainerMode};
use crate::net::params::{read_checkpoint, store_from_tensors, write_checkpoint};
use crate::net::{
    parse_config, parse_config_no_pool, parse_layer_seq, tap_features, FannSpec, NetworkSpec,
    ParamStore, TapPoint,
};
use crate::tensor::Tensor;
use crate::train::{
    evaluate, fann_features, finetune, format_mean_std, history_to_csv, layer_probe, mean_std,
    pretrain_pseudo, train_fann, train_semisup_recon, train_supervised, FannParams, KMeans,
    ModelArch, ProbePoint, TrainedModel,
};

/// Environment overrides: output directory and seed only.
pub const ENV_OUT_DIR: &str = "HYPERALIGN_OUT_DIR";
pub const ENV_SEED: &str = "HYPERALIGN_SEED";

/// Apply environment overrides to a loaded config.
pub fn apply_env_overrides(cfg: &mut ExperimentConfig) -> Result<()> {
    if let Ok(dir) = std::env::var(ENV_OUT_DIR) {
        cfg.report.out_dir = PathBuf::from(dir);
    }
    if let Ok(seed) = std::env::var(ENV_SEED) {
        let seed: u64 = seed
            .parse()
            .map_err(|_| Error::config(ENV_SEED, "must be an unsigned integer"))?;
        cfg.report.seeds = vec![seed];
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Dataset materialization
// ---------------------------------------------------------------------------

/// Load or generate the scene pair a config describes. Single-domain runs
/// use the source side.
pub fn materialize_pair(cfg: &ExperimentConfig) -> Result<DomainPair> {
    if let Some(synth) = &cfg.dataset.synthetic {
        return synth_domain_pair(synth, cfg.dataset.synthetic_seed);
    }
    let paths = cfg
        .dataset
        .paths
        .as_ref()
        .ok_or_else(|| Error::config("dataset", "no synthetic or paths block"))?;
    let source_cube = load_cube(&paths.source_cube)?;
    let source_labels = load_labels(
        &paths.source_labels,
        source_cube.height(),
        source_cube.width(),
    )?;
    let (target_cube, target_labels) = match (&paths.target_cube, &paths.target_labels) {
        (Some(cube), Some(labels)) => {
            let cube = load_cube(cube)?;
            let labels = load_labels(labels, cube.height(), cube.width())?;
            (cube, labels)
        }
        // Single-domain data: mirror the source so the pair type stays
        // uniform; adaptation modes reject this upstream.
        _ => (source_cube.clone(), source_labels.clone()),
    };
    DomainPair::new(
        (source_cube, source_labels),
        (target_cube, target_labels),
        String::new(),
    )
}

// ---------------------------------------------------------------------------
// gen-synth
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct GenSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub shift_metadata: String,
}

/// Generate the configured synthetic pair and write it in the on-disk cube
/// and label formats, plus the generator metadata.
pub fn gen_synth(cfg: &ExperimentConfig, out_dir: &Path) -> Result<GenSummary> {
    if cfg.dataset.synthetic.is_none() {
        return Err(Error::config(
            "dataset.synthetic",
            "gen-synth needs a synthetic dataset block",
        ));
    }
    let pair = materialize_pair(cfg)?;
    fs::create_dir_all(out_dir)?;

    let mut files = Vec::new();
    for (name, cube, labels) in [
        ("source", &pair.source.0, &pair.source.1),
        ("target", &pair.target.0, &pair.target.1),
    ] {
        let header = out_dir.join(format!("{name}.hdr"));
        write_cube(cube, &header)?;
        let labels_path = out_dir.join(format!("{name}.labels.csv"));
        write_labels(labels, &labels_path)?;
        files.push(format!("{name}.hdr"));
        files.push(format!("{name}.bsq"));
        files.push(format!("{name}.labels.csv"));
        files.push(format!("{name}.labels.classes.csv"));
    }
    fs::write(out_dir.join("shift_metadata.json"), &pair.shift_metadata)?;
    files.push("shift_metadata.json".into());

    Ok(GenSummary {
        out_dir: out_dir.to_path_buf(),
        files,
        shift_metadata: pair.shift_metadata.clone(),
    })
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsJson {
    pub mode: String,
    pub seeds: Vec<u64>,
    /// Overall accuracy per seed; null for failed seeds.
    pub oa_per_seed: Vec<Option<f64>>,
    pub oa_mean: f64,
    /// Sample standard deviation; absent for single-seed runs.
    pub oa_std: Option<f64>,
    /// Result-table formatting, `95.8 ± 1.1` style.
    pub oa_formatted: String,
    pub failures: Vec<String>,
}

pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub metrics: MetricsJson,
}

/// Dispatch the configured trainer over every seed, writing per-seed
/// artifacts (checkpoint, history CSV, mode-specific extras) and an
/// aggregate metrics JSON. Individual seed failures are recorded; the run
/// errors only when every seed fails.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let out_dir = cfg.report.out_dir.clone();
    fs::create_dir_all(&out_dir)?;
    let pair = materialize_pair(cfg)?;

    let mut oa_per_seed = Vec::new();
    let mut failures = Vec::new();
    let mut first_error: Option<Error> = None;
    for &seed in &cfg.report.seeds {
        let seed_dir = out_dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&seed_dir)?;
        match run_seed(cfg, &pair, seed, &seed_dir) {
            Ok(oa) => oa_per_seed.push(Some(oa)),
            Err(e) => {
                failures.push(format!("seed {seed}: {e}"));
                oa_per_seed.push(None);
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }

    let succeeded: Vec<f64> = oa_per_seed.iter().filter_map(|o| *o).collect();
    if succeeded.is_empty() {
        return Err(first_error.unwrap_or_else(|| Error::State("no seeds ran".into())));
    }
    let (mean, std) = mean_std(&succeeded);
    let metrics = MetricsJson {
        mode: cfg.trainer.mode.to_string(),
        seeds: cfg.report.seeds.clone(),
        oa_per_seed,
        oa_mean: mean,
        oa_std: std,
        oa_formatted: format_mean_std(&succeeded),
        failures,
    };
    fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    Ok(RunOutcome { out_dir, metrics })
}

/// Prepared single-domain data: labeled train split, test split, and the
/// full pool.
struct SourceSplits {
    train: PatchSet,
    test: PatchSet,
    all: PatchSet,
}

fn source_splits(cfg: &ExperimentConfig, pair: &DomainPair) -> Result<SourceSplits> {
    let (cube, labels) = (&pair.source.0, &pair.source.1);
    let all = extract_patches(
        cube,
        labels,
        cfg.model.window,
        PatchSelection::All,
        DomainTag::Source,
    )?;
    let split = split_labels(labels, cfg.split.per_class_train, cfg.split.seed)?;
    let mut train = all.subset_by_pixel(labels.width(), &split.train_indices);
    let test = all.subset_by_pixel(labels.width(), &split.test_indices);
    if let Some(plan) = &cfg.augment {
        train = augment::expand(&train, plan, cube.kind())?;
    }
    Ok(SourceSplits { train, test, all })
}

fn run_seed(cfg: &ExperimentConfig, pair: &DomainPair, seed: u64, seed_dir: &Path) -> Result<f64> {
    let train_cfg = cfg.train_config(seed);
    match cfg.trainer.mode {
        TrainerMode::Supervised => {
            let splits = source_splits(cfg, pair)?;
            let spec = cfg.network_spec()?;
            let model = train_supervised(&spec, &splits.train, &train_cfg)?;
            finish_single(&model, &splits.test, seed, seed_dir)
        }
        TrainerMode::SemisupRecon => {
            let splits = source_splits(cfg, pair)?;
            let spec = cfg.network_spec()?;
            // Everything outside the labeled split feeds the
            // reconstruction term unlabeled.
            let mut unlabeled = splits.all.clone();
            for l in &mut unlabeled.labels {
                *l = 0;
            }
            let model = train_semisup_recon(&spec, &splits.train, &unlabeled, &train_cfg)?;
            finish_single(&model, &splits.test, seed, seed_dir)
        }
        TrainerMode::Plssdl => {
            let splits = source_splits(cfg, pair)?;
            let spec = cfg.network_spec()?;
            let mut pretrain_spec = spec.trunk();
            pretrain_spec.layers.push(crate::net::LayerSpec::Softmax {
                classes: train_cfg.cluster_k,
            });
            let clusterer = KMeans {
                restarts: train_cfg.cluster_restarts,
                max_iters: 100,
            };
            let mut unlabeled = splits.all.clone();
            for l in &mut unlabeled.labels {
                *l = 0;
            }
            let pretrained = pretrain_pseudo(&pretrain_spec, &unlabeled, &train_cfg, &clusterer)?;
            let model = finetune(&pretrained, &splits.train, &train_cfg)?;
            finish_single(&model, &splits.test, seed, seed_dir)
        }
        TrainerMode::Fann => {
            let spec = cfg.fann_spec()?;
            let (s_cube, s_labels) = (&pair.source.0, &pair.source.1);
            let (t_cube, t_labels) = (&pair.target.0, &pair.target.1);
            let s_all = extract_patches(
                s_cube,
                s_labels,
                cfg.model.window,
                PatchSelection::All,
                DomainTag::Source,
            )?;
            let t_all = extract_patches(
                t_cube,
                t_labels,
                cfg.model.window,
                PatchSelection::All,
                DomainTag::Target,
            )?;
            let s_split = split_labels(s_labels, cfg.split.per_class_train, cfg.split.seed)?;
            let per_class_target = cfg
                .split
                .per_class_target
                .unwrap_or(cfg.split.per_class_train);
            let t_split = split_labels(t_labels, per_class_target, cfg.split.seed ^ 0xa5a5)?;
            let mut s_train = s_all.subset_by_pixel(s_labels.width(), &s_split.train_indices);
            let t_train = t_all.subset_by_pixel(t_labels.width(), &t_split.train_indices);
            let t_test = t_all.subset_by_pixel(t_labels.width(), &t_split.test_indices);
            if let Some(plan) = &cfg.augment {
                s_train = augment::expand(&s_train, plan, s_cube.kind())?;
            }

            let model = train_fann(&spec, &s_train, &t_train, &train_cfg)?;
            let report = evaluate(&model, &t_test)?;
            fs::write(
                seed_dir.join("history.csv"),
                history_to_csv(&model.history),
            )?;
            write_eval(seed_dir, &report)?;
            save_model(&model, seed, &seed_dir.join("checkpoint"))?;

            // Per-layer probe table artifacts.
            let mut probes = String::from("layer,overall_accuracy\n");
            for p in 0..spec.aligned_pairs.len() {
                let oa = layer_probe(
                    &model,
                    ProbePoint::Pair(p),
                    &s_train,
                    &t_train,
                    &t_test,
                    &train_cfg,
                )?;
                probes.push_str(&format!("FA-{},{oa}\n", p + 1));
            }
            let concat_oa = layer_probe(
                &model,
                ProbePoint::Concatenated,
                &s_train,
                &t_train,
                &t_test,
                &train_cfg,
            )?;
            probes.push_str(&format!("concatenated,{concat_oa}\n"));
            fs::write(seed_dir.join("probes.csv"), probes)?;

            Ok(report.overall_accuracy)
        }
        TrainerMode::Active => {
            let active = cfg.trainer.active.as_ref().ok_or_else(|| {
                Error::config("trainer.active", "active mode needs an active block")
            })?;
            let spec = cfg.network_spec()?;
            let (cube, labels) = (&pair.source.0, &pair.source.1);
            let all = extract_patches(
                cube,
                labels,
                cfg.model.window,
                PatchSelection::All,
                DomainTag::Source,
            )?;
            let initial = split_labels(labels, active.initial_per_class, cfg.split.seed)?;
            let universe_pixels: Vec<usize> = initial
                .train_indices
                .iter()
                .chain(&initial.test_indices)
                .copied()
                .collect();
            let _ = universe_pixels;
            // Remaining labeled pixels split alternately into pool and test.
            let width = labels.width();
            let labeled_set = all.subset_by_pixel(width, &initial.train_indices);
            let rest: Vec<usize> = initial.test_indices.clone();
            let pool_pixels: Vec<usize> = rest.iter().copied().step_by(2).collect();
            let test_pixels: Vec<usize> = rest.iter().copied().skip(1).step_by(2).collect();
            let pool_set = all.subset_by_pixel(width, &pool_pixels);
            let test = all.subset_by_pixel(width, &test_pixels);

            // One universe set: labeled first, then pool.
            let mut universe = labeled_set.clone();
            universe.patches.extend(pool_set.patches.iter().cloned());
            universe.labels.extend(pool_set.labels.iter().cloned());
            universe
                .origin_coords
                .extend(pool_set.origin_coords.iter().cloned());
            let labeled_idx: Vec<usize> = (0..labeled_set.len()).collect();
            let pool_idx: Vec<usize> =
                (labeled_set.len()..labeled_set.len() + pool_set.len()).collect();
            let state = ALState::new(labeled_idx, pool_idx, active.budget, active.step)?;

            let (curve, _) = run_loop(
                &universe,
                state,
                active.strategy,
                &spec,
                &train_cfg,
                &active.scoring,
                &test,
            )?;
            fs::write(seed_dir.join("curve.csv"), curve_to_csv(&curve))?;
            let final_oa = curve.last().map(|p| p.overall_accuracy).unwrap_or(f64::NAN);
            fs::write(
                seed_dir.join("eval.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "overall_accuracy": final_oa,
                    "labels_used": curve.last().map(|p| p.labels_used),
                }))?,
            )?;
            Ok(final_oa)
        }
    }
}

fn finish_single(
    model: &TrainedModel,
    test: &PatchSet,
    seed: u64,
    seed_dir: &Path,
) -> Result<f64> {
    let report = evaluate(model, test)?;
    fs::write(seed_dir.join("history.csv"), history_to_csv(&model.history))?;
    write_eval(seed_dir, &report)?;
    save_model(model, seed, &seed_dir.join("checkpoint"))?;
    Ok(report.overall_accuracy)
}

fn write_eval(seed_dir: &Path, report: &crate::train::EvalReport) -> Result<()> {
    fs::write(
        seed_dir.join("eval.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "overall_accuracy": report.overall_accuracy,
            "per_class": report.per_class,
            "confusion": report.confusion,
            "n": report.n,
        }))?,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Write a trained model as `<base>.bin` + `<base>.json`.
pub fn save_model(model: &TrainedModel, seed: u64, base: &Path) -> Result<()> {
    match &model.arch {
        ModelArch::Single { spec, params } => {
            let architecture = serde_json::json!({
                "kind": "single",
                "network": crate::net::render_config(spec),
                "window": spec.input_window,
                "auto_pool": spec.auto_pool,
            });
            write_checkpoint(base, seed, architecture, &[("net".into(), params)])
        }
        ModelArch::Fann { spec, params } => {
            let architecture = serde_json::json!({
                "kind": "fann",
                "source_network": crate::net::render_config(&spec.source_branch),
                "target_network": crate::net::render_config(&spec.target_branch),
                "window": spec.source_branch.input_window,
                "auto_pool": spec.source_branch.auto_pool,
                "aligned_pairs": spec.aligned_pairs,
                "shared_dim": spec.shared_dim,
                "head": render_layer_seq(&spec.head),
                "betas": params.betas,
            });
            let mut sections: Vec<(String, &ParamStore)> = vec![
                ("source".into(), &params.source),
                ("target".into(), &params.target),
                ("head".into(), &params.head),
            ];
            let proj_stores: Vec<(String, ParamStore)> = params
                .proj_source
                .iter()
                .enumerate()
                .map(|(p, m)| (format!("proj_source_{p}"), linear_as_store(m, seed)))
                .chain(
                    params
                        .proj_target
                        .iter()
                        .enumerate()
                        .map(|(p, m)| (format!("proj_target_{p}"), linear_as_store(m, seed))),
                )
                .collect();
            for (name, store) in &proj_stores {
                sections.push((name.clone(), store));
            }
            write_checkpoint(base, seed, architecture, &sections)
        }
    }
}

fn render_layer_seq(layers: &[crate::net::LayerSpec]) -> String {
    let spec = NetworkSpec {
        input_bands: 1,
        input_window: 1,
        layers: layers.to_vec(),
        auto_pool: false,
    };
    crate::net::render_config(&spec)
        .trim_start_matches("input-1")
        .trim_start_matches(" → ")
        .to_string()
}

fn linear_as_store(map: &crate::train::LinearMap, seed: u64) -> ParamStore {
    ParamStore {
        seed,
        layers: vec![crate::net::LayerParams::Dense {
            w: map.w.clone(),
            b: map.b.clone(),
        }],
    }
}

/// Load a checkpoint written by [`save_model`].
pub fn load_model(base: &Path) -> Result<TrainedModel> {
    let (manifest, tensors) = read_checkpoint(base)?;
    let arch = &manifest.architecture;
    let kind = arch["kind"].as_str().unwrap_or_default();
    let window = arch["window"].as_u64().unwrap_or(1) as usize;
    let auto_pool = arch["auto_pool"].as_bool().unwrap_or(true);
    let parse_net = |text: &str| -> Result<NetworkSpec> {
        let spec = if auto_pool {
            parse_config(text)?
        } else {
            parse_config_no_pool(text)?
        };
        Ok(spec.with_window(window))
    };

    let provenance = crate::train::Provenance {
        config_hash: String::new(),
        seed: manifest.seed,
    };
    match kind {
        "single" => {
            let spec = parse_net(arch["network"].as_str().unwrap_or_default())?;
            let params = store_from_tensors(&spec, "net", manifest.seed, &tensors)?;
            Ok(TrainedModel {
                arch: ModelArch::Single { spec, params },
                history: Vec::new(),
                provenance,
            })
        }
        "fann" => {
            let source = parse_net(arch["source_network"].as_str().unwrap_or_default())?;
            let target = parse_net(arch["target_network"].as_str().unwrap_or_default())?;
            let pairs: Vec<(usize, usize)> =
                serde_json::from_value(arch["aligned_pairs"].clone())
                    .map_err(|e| Error::Format(format!("bad aligned_pairs: {e}")))?;
            let shared_dim = arch["shared_dim"].as_u64().unwrap_or(16) as usize;
            let head = parse_layer_seq(arch["head"].as_str().unwrap_or_default())?;
            let spec = FannSpec::new(source, target, pairs.clone(), shared_dim, head)?;
            let betas: Vec<f64> = serde_json::from_value(arch["betas"].clone())
                .unwrap_or_else(|_| vec![0.5; pairs.len()]);

            let source_params =
                store_from_tensors(&spec.source_branch, "source", manifest.seed, &tensors)?;
            let target_params =
                store_from_tensors(&spec.target_branch, "target", manifest.seed, &tensors)?;
            let head_params =
                store_from_tensors(&spec.head_spec(), "head", manifest.seed, &tensors)?;
            let fetch_linear = |name: String| -> Result<crate::train::LinearMap> {
                let (dims, values) = tensors
                    .get(&format!("{name}/layer0/w"))
                    .ok_or_else(|| Error::Format(format!("missing tensor {name}/layer0/w")))?;
                let (_, b) = tensors
                    .get(&format!("{name}/layer0/b"))
                    .ok_or_else(|| Error::Format(format!("missing tensor {name}/layer0/b")))?;
                Ok(crate::train::LinearMap {
                    w: Tensor::from_vec(dims, values.clone()),
                    b: b.clone(),
                })
            };
            let mut proj_source = Vec::new();
            let mut proj_target = Vec::new();
            for p in 0..pairs.len() {
                proj_source.push(fetch_linear(format!("proj_source_{p}"))?);
                proj_target.push(fetch_linear(format!("proj_target_{p}"))?);
            }
            let params = FannParams {
                source: source_params,
                target: target_params,
                proj_source,
                proj_target,
                head: head_params,
                betas,
            };
            Ok(TrainedModel {
                arch: ModelArch::Fann { spec, params },
                history: Vec::new(),
                provenance,
            })
        }
        other => Err(Error::Format(format!("unknown checkpoint kind {other:?}"))),
    }
}

// ---------------------------------------------------------------------------
// export-features
// ---------------------------------------------------------------------------

/// Export N x d features at a tap point as CSV with domain tags and labels.
///
/// `layer` is `input`, a layer index (single models), or `fa<k>` /
/// `concat` (adaptation models). Single models export the source domain,
/// plus the target when its shape matches; adaptation models export both
/// domains through their own branches.
pub fn export_features(
    checkpoint: &Path,
    cfg: &ExperimentConfig,
    layer: &str,
    out: &Path,
) -> Result<usize> {
    let model = load_model(checkpoint)?;
    let pair = materialize_pair(cfg)?;
    let window = cfg.model.window;

    let patches = |cube: &HyperCube, labels: &LabelMap, domain| -> Result<PatchSet> {
        extract_patches(cube, labels, window, PatchSelection::All, domain)
    };
    let source = patches(&pair.source.0, &pair.source.1, DomainTag::Source)?;
    let target = patches(&pair.target.0, &pair.target.1, DomainTag::Target)?;

    let mut rows: Vec<(DomainTag, u32, Vec<f64>)> = Vec::new();
    match &model.arch {
        ModelArch::Single { spec, params } => {
            let point = parse_single_tap(spec, layer)?;
            let feats = tap_features(spec, params, &source, point)?;
            for i in 0..source.len() {
                rows.push((DomainTag::Source, source.labels[i], feats.row(i).to_vec()));
            }
            if target.bands == spec.input_bands && target.window == spec.input_window {
                let feats = tap_features(spec, params, &target, point)?;
                for i in 0..target.len() {
                    rows.push((DomainTag::Target, target.labels[i], feats.row(i).to_vec()));
                }
            }
        }
        ModelArch::Fann { spec, params } => {
            if layer == "input" {
                for set in [&source, &target] {
                    for i in 0..set.len() {
                        rows.push((set.domain, set.labels[i], set.patches[i].clone()));
                    }
                }
            } else {
                let point = parse_fann_tap(spec, layer)?;
                for set in [&source, &target] {
                    let feats = fann_features(spec, params, set, point)?;
                    for i in 0..set.len() {
                        rows.push((set.domain, set.labels[i], feats.row(i).to_vec()));
                    }
                }
            }
        }
    }

    let dim = rows.first().map(|(_, _, f)| f.len()).unwrap_or(0);
    let mut csv = String::from("domain,label");
    for k in 0..dim {
        csv.push_str(&format!(",f{k}"));
    }
    csv.push('\n');
    for (domain, label, feats) in &rows {
        csv.push_str(&format!("{domain},{label}"));
        for v in feats {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, csv)?;
    Ok(rows.len())
}

fn parse_single_tap(spec: &NetworkSpec, layer: &str) -> Result<TapPoint> {
    if layer == "input" {
        return Ok(TapPoint::Input);
    }
    let idx: usize = layer
        .parse()
        .map_err(|_| Error::argument(format!("unknown layer {layer:?}: use `input` or an index")))?;
    if idx >= spec.layers.len() {
        return Err(Error::argument(format!(
            "layer index {idx} out of range (network has {} layers)",
            spec.layers.len()
        )));
    }
    Ok(TapPoint::Layer(idx))
}

fn parse_fann_tap(spec: &FannSpec, layer: &str) -> Result<ProbePoint> {
    if layer == "concat" || layer == "concatenated" {
        return Ok(ProbePoint::Concatenated);
    }
    if let Some(rest) = layer.strip_prefix("fa") {
        let k: usize = rest
            .parse()
            .map_err(|_| Error::argument(format!("unknown layer {layer:?}")))?;
        if k == 0 || k > spec.aligned_pairs.len() {
            return Err(Error::argument(format!(
                "aligned pair {k} out of range (1..={})",
                spec.aligned_pairs.len()
            )));
        }
        return Ok(ProbePoint::Pair(k - 1));
    }
    Err(Error::argument(format!(
        "unknown layer {layer:?}: use `input`, `fa<k>`, or `concat`"
    )))
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Render a run directory into Markdown (written as `report.md`, returned)
/// plus a `summary.csv`. Missing artifacts produce a report error listing
/// every gap.
pub fn report(run_dir: &Path) -> Result<String> {
    let metrics_path = run_dir.join("metrics.json");
    let mut gaps = Vec::new();
    if !metrics_path.exists() {
        gaps.push("metrics.json".to_string());
    }
    let metrics: Option<MetricsJson> = if metrics_path.exists() {
        Some(serde_json::from_str(&fs::read_to_string(&metrics_path)?)?)
    } else {
        None
    };
    if let Some(m) = &metrics {
        for &seed in &m.seeds {
            let seed_dir = run_dir.join(format!("seed_{seed}"));
            if !seed_dir.exists() {
                gaps.push(format!("seed_{seed}/"));
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Report(format!(
            "run directory {run_dir:?} is missing: {}",
            gaps.join(", ")
        )));
    }
    let metrics = metrics.expect("checked above");

    let mut md = String::new();
    md.push_str(&format!("# Run report: {}\n\n", metrics.mode));
    md.push_str("## Overall accuracy\n\n");
    md.push_str("| method | OA |\n|---|---|\n");
    md.push_str(&format!("| {} | {} |\n", metrics.mode, metrics.oa_formatted));
    md.push_str("\nPer seed:\n\n| seed | OA |\n|---|---|\n");
    for (seed, oa) in metrics.seeds.iter().zip(&metrics.oa_per_seed) {
        match oa {
            Some(oa) => md.push_str(&format!("| {seed} | {:.1} |\n", oa * 100.0)),
            None => md.push_str(&format!("| {seed} | failed |\n")),
        }
    }
    if !metrics.failures.is_empty() {
        md.push_str("\n## Failures\n\n");
        for f in &metrics.failures {
            md.push_str(&format!("- {f}\n"));
        }
    }

    // Per-layer probe table (adaptation runs): mean OA per layer across
    // seeds, columns FA-1..FA-k plus the concatenation.
    let mut probe_tables: Vec<Vec<(String, f64)>> = Vec::new();
    for &seed in &metrics.seeds {
        let path = run_dir.join(format!("seed_{seed}")).join("probes.csv");
        if let Ok(text) = fs::read_to_string(&path) {
            let mut rows = Vec::new();
            for line in text.lines().skip(1) {
                if let Some((name, value)) = line.split_once(',') {
                    if let Ok(v) = value.parse::<f64>() {
                        rows.push((name.to_string(), v));
                    }
                }
            }
            probe_tables.push(rows);
        }
    }
    if !probe_tables.is_empty() {
        md.push_str("\n## Aligned-layer probes\n\n");
        let names: Vec<String> = probe_tables[0].iter().map(|(n, _)| n.clone()).collect();
        md.push_str("| layer |");
        for n in &names {
            md.push_str(&format!(" {n} |"));
        }
        md.push_str("\n|---|");
        md.push_str(&"---|".repeat(names.len()));
        md.push_str("\n| OA |");
        for (k, _) in names.iter().enumerate() {
            let vals: Vec<f64> = probe_tables
                .iter()
                .filter_map(|t| t.get(k).map(|(_, v)| *v))
                .collect();
            let (mean, _) = mean_std(&vals);
            md.push_str(&format!(" {:.1} |", mean * 100.0));
        }
        md.push('\n');
    }

    // Learning curves (active runs).
    let mut any_curve = false;
    for &seed in &metrics.seeds {
        let path = run_dir.join(format!("seed_{seed}")).join("curve.csv");
        if let Ok(text) = fs::read_to_string(&path) {
            if !any_curve {
                md.push_str("\n## Active-learning curves\n");
                any_curve = true;
            }
            md.push_str(&format!("\nSeed {seed}:\n\n| labels | OA |\n|---|---|\n"));
            for line in text.lines().skip(1) {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() >= 3 {
                    if let Ok(oa) = cols[2].parse::<f64>() {
                        md.push_str(&format!("| {} | {:.1} |\n", cols[1], oa * 100.0));
                    }
                }
            }
        }
    }

    let mut summary = String::from("mode,oa_mean,oa_std,oa_formatted\n");
    summary.push_str(&format!(
        "{},{},{},{}\n",
        metrics.mode,
        metrics.oa_mean,
        metrics.oa_std.map(|s| s.to_string()).unwrap_or_default(),
        metrics.oa_formatted
    ));
    fs::write(run_dir.join("summary.csv"), summary)?;
    fs::write(run_dir.join("report.md"), &md)?;
    Ok(md)
}
