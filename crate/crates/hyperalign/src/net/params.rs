//! Parameter storage, initialization, and checkpoint serialization.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{LayerSpec, NetworkSpec, Shape};

/// Weights of one layer. Softmax layers reuse the `Dense` form (their
/// projection is a plain linear map).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Empty,
    Conv {
        /// Kernel tensor, laid out (kh, kw, in_channels, filters).
        w: Tensor,
        b: Vec<f64>,
    },
    Dense {
        /// Weight matrix, laid out (in, out).
        w: Tensor,
        b: Vec<f64>,
    },
    Gru {
        /// Input-to-gate matrices, laid out (in, state).
        wz: Tensor,
        wr: Tensor,
        wh: Tensor,
        /// State-to-gate matrices, laid out (state, state).
        uz: Tensor,
        ur: Tensor,
        uh: Tensor,
        bz: Vec<f64>,
        br: Vec<f64>,
        bh: Vec<f64>,
    },
}

impl LayerParams {
    /// Visit every scalar as (name, slice).
    fn slices(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            LayerParams::Empty => vec![],
            LayerParams::Conv { w, b } | LayerParams::Dense { w, b } => {
                vec![("w", &w.data), ("b", b.as_slice())]
            }
            LayerParams::Gru {
                wz,
                wr,
                wh,
                uz,
                ur,
                uh,
                bz,
                br,
                bh,
            } => vec![
                ("wz", &wz.data),
                ("wr", &wr.data),
                ("wh", &wh.data),
                ("uz", &uz.data),
                ("ur", &ur.data),
                ("uh", &uh.data),
                ("bz", bz.as_slice()),
                ("br", br.as_slice()),
                ("bh", bh.as_slice()),
            ],
        }
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            LayerParams::Empty => vec![],
            LayerParams::Conv { w, b } | LayerParams::Dense { w, b } => {
                vec![w.data.as_mut_slice(), b.as_mut_slice()]
            }
            LayerParams::Gru {
                wz,
                wr,
                wh,
                uz,
                ur,
                uh,
                bz,
                br,
                bh,
            } => vec![
                wz.data.as_mut_slice(),
                wr.data.as_mut_slice(),
                wh.data.as_mut_slice(),
                uz.data.as_mut_slice(),
                ur.data.as_mut_slice(),
                uh.data.as_mut_slice(),
                bz.as_mut_slice(),
                br.as_mut_slice(),
                bh.as_mut_slice(),
            ],
        }
    }

    pub(crate) fn zeros_like(&self) -> LayerParams {
        match self {
            LayerParams::Empty => LayerParams::Empty,
            LayerParams::Conv { w, b } => LayerParams::Conv {
                w: Tensor::zeros(&w.dims),
                b: vec![0.0; b.len()],
            },
            LayerParams::Dense { w, b } => LayerParams::Dense {
                w: Tensor::zeros(&w.dims),
                b: vec![0.0; b.len()],
            },
            LayerParams::Gru {
                wz,
                wr,
                wh,
                uz,
                ur,
                uh,
                bz,
                br,
                bh,
            } => LayerParams::Gru {
                wz: Tensor::zeros(&wz.dims),
                wr: Tensor::zeros(&wr.dims),
                wh: Tensor::zeros(&wh.dims),
                uz: Tensor::zeros(&uz.dims),
                ur: Tensor::zeros(&ur.dims),
                uh: Tensor::zeros(&uh.dims),
                bz: vec![0.0; bz.len()],
                br: vec![0.0; br.len()],
                bh: vec![0.0; bh.len()],
            },
        }
    }
}

/// Per-layer weight tensors keyed by layer position, plus the seed they
/// were initialized from. The same structure doubles as gradient storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub seed: u64,
    pub layers: Vec<LayerParams>,
}

impl ParamStore {
    /// A store of zeros with the same shape as `self`.
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            seed: self.seed,
            layers: self.layers.iter().map(|l| l.zeros_like()).collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.slices())
            .map(|(_, s)| s.len())
            .sum()
    }

    /// All scalars concatenated in a stable order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for layer in &self.layers {
            for (_, s) in layer.slices() {
                out.extend_from_slice(s);
            }
        }
        out
    }

    /// Read scalar `idx` in flatten() order.
    pub fn get_scalar(&self, idx: usize) -> f64 {
        let mut i = idx;
        for layer in &self.layers {
            for (_, s) in layer.slices() {
                if i < s.len() {
                    return s[i];
                }
                i -= s.len();
            }
        }
        panic!("scalar index {idx} out of range");
    }

    /// Write scalar `idx` in flatten() order.
    pub fn set_scalar(&mut self, idx: usize, value: f64) {
        let mut i = idx;
        for layer in &mut self.layers {
            for s in layer.slices_mut() {
                if i < s.len() {
                    s[i] = value;
                    return;
                }
                i -= s.len();
            }
        }
        panic!("scalar index {idx} out of range");
    }

    /// In-place SGD step: `p -= lr * g` for every scalar, optionally
    /// restricted to the given layer indices.
    pub fn sgd_step(&mut self, grads: &ParamStore, lr: f64, only_layers: Option<&[usize]>) {
        for (i, (layer, grad)) in self.layers.iter_mut().zip(&grads.layers).enumerate() {
            if let Some(allowed) = only_layers {
                if !allowed.contains(&i) {
                    continue;
                }
            }
            for (ps, gs) in layer.slices_mut().into_iter().zip(grad.slices()) {
                for (p, g) in ps.iter_mut().zip(gs.1) {
                    *p -= lr * g;
                }
            }
        }
    }

    /// Accumulate `other * scale` into `self` (gradient accumulation).
    pub fn accumulate(&mut self, other: &ParamStore, scale: f64) {
        for (layer, olayer) in self.layers.iter_mut().zip(&other.layers) {
            for (ps, os) in layer.slices_mut().into_iter().zip(olayer.slices()) {
                for (p, o) in ps.iter_mut().zip(os.1) {
                    *p += scale * o;
                }
            }
        }
    }

    /// Multiply every weight matrix (not biases) by `factor`.
    pub fn decay_weights(&mut self, factor: f64) {
        for layer in &mut self.layers {
            match layer {
                LayerParams::Empty => {}
                LayerParams::Conv { w, .. } | LayerParams::Dense { w, .. } => {
                    for v in w.data.iter_mut() {
                        *v *= factor;
                    }
                }
                LayerParams::Gru {
                    wz, wr, wh, uz, ur, uh, ..
                } => {
                    for t in [wz, wr, wh, uz, ur, uh] {
                        for v in t.data.iter_mut() {
                            *v *= factor;
                        }
                    }
                }
            }
        }
    }

    /// Bitwise checksum of selected layers; identical iff the weights are
    /// bit-identical. Used to prove frozen layers were never touched.
    pub fn checksum(&self, layers: &[usize]) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for &i in layers {
            for (_, s) in self.layers[i].slices() {
                for v in s {
                    for byte in v.to_le_bytes() {
                        h ^= byte as u64;
                        h = h.wrapping_mul(0x100000001b3);
                    }
                }
            }
        }
        h
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.slices())
            .all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    /// Named tensors for checkpointing: (name, dims, values).
    pub fn entries(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Empty => {}
                LayerParams::Conv { w, b } | LayerParams::Dense { w, b } => {
                    out.push((format!("layer{i}/w"), w.dims.clone(), w.data.clone()));
                    out.push((format!("layer{i}/b"), vec![b.len()], b.clone()));
                }
                LayerParams::Gru { .. } => {
                    for (name, s) in layer.slices() {
                        let dims = match layer {
                            LayerParams::Gru {
                                wz,
                                wr,
                                wh,
                                uz,
                                ur,
                                uh,
                                ..
                            } => match name {
                                "wz" => wz.dims.clone(),
                                "wr" => wr.dims.clone(),
                                "wh" => wh.dims.clone(),
                                "uz" => uz.dims.clone(),
                                "ur" => ur.dims.clone(),
                                "uh" => uh.dims.clone(),
                                _ => vec![s.len()],
                            },
                            _ => unreachable!(),
                        };
                        out.push((format!("layer{i}/{name}"), dims, s.to_vec()));
                    }
                }
            }
        }
        out
    }
}

/// Initialize parameters for a spec: weights from a variance-scaled uniform
/// distribution (fan-in scaling), biases zero. Deterministic per seed.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ParamStore> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = spec.layer_shapes();
    let mut layers = Vec::with_capacity(spec.layers.len());

    for (i, layer) in spec.layers.iter().enumerate() {
        let input: Shape = if i == 0 {
            spec.input_shape()
        } else {
            shapes[i - 1]
        };
        let params = match *layer {
            LayerSpec::Conv { kernel, filters } => {
                let fan_in = kernel * kernel * input.c;
                LayerParams::Conv {
                    w: uniform_tensor(&mut rng, &[kernel, kernel, input.c, filters], fan_in),
                    b: vec![0.0; filters],
                }
            }
            LayerSpec::Dense { units } | LayerSpec::Linear { units } => {
                let fan_in = input.numel();
                LayerParams::Dense {
                    w: uniform_tensor(&mut rng, &[fan_in, units], fan_in),
                    b: vec![0.0; units],
                }
            }
            LayerSpec::Softmax { classes } => {
                let fan_in = input.numel();
                LayerParams::Dense {
                    w: uniform_tensor(&mut rng, &[fan_in, classes], fan_in),
                    b: vec![0.0; classes],
                }
            }
            LayerSpec::Recurrent { state_dim } => {
                // The scan runs along the channel axis; each step consumes
                // the flattened spatial slice of one channel.
                let step_dim = input.h * input.w;
                LayerParams::Gru {
                    wz: uniform_tensor(&mut rng, &[step_dim, state_dim], step_dim),
                    wr: uniform_tensor(&mut rng, &[step_dim, state_dim], step_dim),
                    wh: uniform_tensor(&mut rng, &[step_dim, state_dim], step_dim),
                    uz: uniform_tensor(&mut rng, &[state_dim, state_dim], state_dim),
                    ur: uniform_tensor(&mut rng, &[state_dim, state_dim], state_dim),
                    uh: uniform_tensor(&mut rng, &[state_dim, state_dim], state_dim),
                    bz: vec![0.0; state_dim],
                    br: vec![0.0; state_dim],
                    bh: vec![0.0; state_dim],
                }
            }
            LayerSpec::MaxPool | LayerSpec::Dropout { .. } | LayerSpec::Upsample => {
                LayerParams::Empty
            }
        };
        layers.push(params);
    }

    Ok(ParamStore { seed, layers })
}

pub(crate) fn uniform_tensor(rng: &mut ChaCha8Rng, dims: &[usize], fan_in: usize) -> Tensor {
    // Uniform on [-a, a] with a = sqrt(3 / fan_in) has variance 1 / fan_in.
    let a = (3.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-a..=a)).collect();
    Tensor::from_vec(dims, data)
}

// ---------------------------------------------------------------------------
// Checkpoints: one binary blob of little-endian f64 plus a JSON manifest.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct ManifestEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct CheckpointManifest {
    pub seed: u64,
    /// Free-form architecture description (config strings and window).
    pub architecture: serde_json::Value,
    pub tensors: Vec<ManifestEntry>,
}

/// Write named tensors as `<base>.bin` + `<base>.json`.
pub(crate) fn write_checkpoint(
    base: &Path,
    seed: u64,
    architecture: serde_json::Value,
    sections: &[(String, &ParamStore)],
) -> Result<()> {
    let mut blob: Vec<u8> = Vec::new();
    let mut tensors = Vec::new();
    for (prefix, store) in sections {
        for (name, dims, values) in store.entries() {
            let offset = blob.len();
            for v in &values {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            tensors.push(ManifestEntry {
                name: format!("{prefix}/{name}"),
                dims,
                offset,
                len: values.len(),
            });
        }
    }
    let manifest = CheckpointManifest {
        seed,
        architecture,
        tensors,
    };
    fs::write(base.with_extension("bin"), blob)?;
    fs::write(
        base.with_extension("json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Read a checkpoint back as (manifest, name -> (dims, values)).
pub(crate) fn read_checkpoint(
    base: &Path,
) -> Result<(CheckpointManifest, std::collections::BTreeMap<String, (Vec<usize>, Vec<f64>)>)> {
    let manifest_path = base.with_extension("json");
    let manifest: CheckpointManifest = serde_json::from_str(
        &fs::read_to_string(&manifest_path)
            .map_err(|e| Error::Ingestion(format!("cannot read manifest {manifest_path:?}: {e}")))?,
    )?;
    let blob = fs::read(base.with_extension("bin"))
        .map_err(|e| Error::Ingestion(format!("cannot read checkpoint payload: {e}")))?;

    let mut tensors = std::collections::BTreeMap::new();
    for entry in &manifest.tensors {
        let end = entry.offset + entry.len * 8;
        if end > blob.len() {
            return Err(Error::Format(format!(
                "checkpoint tensor {} overruns the payload",
                entry.name
            )));
        }
        let values: Vec<f64> = blob[entry.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.insert(entry.name.clone(), (entry.dims.clone(), values));
    }
    Ok((manifest, tensors))
}

/// Rebuild a ParamStore for `spec` from checkpoint tensors under `prefix`.
pub(crate) fn store_from_tensors(
    spec: &NetworkSpec,
    prefix: &str,
    seed: u64,
    tensors: &std::collections::BTreeMap<String, (Vec<usize>, Vec<f64>)>,
) -> Result<ParamStore> {
    let mut store = init_params(spec, 0)?;
    store.seed = seed;
    let fetch = |name: String| -> Result<&(Vec<usize>, Vec<f64>)> {
        tensors
            .get(&name)
            .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor {name}")))
    };
    for (i, layer) in store.layers.iter_mut().enumerate() {
        match layer {
            LayerParams::Empty => {}
            LayerParams::Conv { w, b } | LayerParams::Dense { w, b } => {
                let (dims, values) = fetch(format!("{prefix}/layer{i}/w"))?;
                if *dims != w.dims {
                    return Err(Error::Format(format!(
                        "tensor {prefix}/layer{i}/w has dims {dims:?}, expected {:?}",
                        w.dims
                    )));
                }
                w.data.clone_from(values);
                let (_, bv) = fetch(format!("{prefix}/layer{i}/b"))?;
                b.clone_from(bv);
            }
            LayerParams::Gru {
                wz,
                wr,
                wh,
                uz,
                ur,
                uh,
                bz,
                br,
                bh,
            } => {
                for (name, t) in [
                    ("wz", &mut *wz),
                    ("wr", &mut *wr),
                    ("wh", &mut *wh),
                    ("uz", &mut *uz),
                    ("ur", &mut *ur),
                    ("uh", &mut *uh),
                ] {
                    let (dims, values) = fetch(format!("{prefix}/layer{i}/{name}"))?;
                    if *dims != t.dims {
                        return Err(Error::Format(format!(
                            "tensor {prefix}/layer{i}/{name} has unexpected dims"
                        )));
                    }
                    t.data.clone_from(values);
                }
                for (name, b) in [("bz", &mut *bz), ("br", &mut *br), ("bh", &mut *bh)] {
                    let (_, values) = fetch(format!("{prefix}/layer{i}/{name}"))?;
                    b.clone_from(values);
                }
            }
        }
    }
    Ok(store)
}
