//! Per-sample forward evaluation with feature taps, and the matching
//! hand-rolled backward pass.
//!
//! Activations are (h, w, c) tensors; vectors travel as (1, 1, d). The
//! backward pass accepts extra gradients injected at arbitrary layer
//! outputs, which is how alignment losses tied to intermediate taps flow
//! back through a branch.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::params::{LayerParams, ParamStore};
use super::{LayerSpec, NetworkSpec};

/// Whether a forward pass samples dropout masks.
pub enum DropoutMode<'a> {
    /// Dropout layers are identity maps (evaluation mode).
    Off,
    /// Masks are resampled from this generator (training / MC inference).
    Sample(&'a mut ChaCha8Rng),
}

/// Where to read features for export, probing, or alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapPoint {
    /// The flattened raw input.
    Input,
    /// The flattened output of layer `i`.
    Layer(usize),
}

#[derive(Debug, Clone)]
struct GruTrace {
    xs: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    rs: Vec<Vec<f64>>,
    hbars: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Pool { argmax: Vec<usize> },
    Gru(Box<GruTrace>),
    Dropout { mask: Vec<f64> },
}

/// Everything one forward evaluation produced: the activation of every
/// layer (retrievable by id) plus the internal traces backward needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `activations[0]` is the input sample; `activations[i + 1]` is the
    /// output of layer `i`.
    pub activations: Vec<Tensor>,
    aux: Vec<Aux>,
}

impl ForwardPass {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("nonempty pass")
    }

    pub fn tap(&self, point: TapPoint) -> &Tensor {
        match point {
            TapPoint::Input => &self.activations[0],
            TapPoint::Layer(i) => &self.activations[i + 1],
        }
    }
}

/// Run one sample through the network. `sample` must be
/// (input_window, input_window, input_bands).
pub fn forward(
    spec: &NetworkSpec,
    params: &ParamStore,
    sample: &Tensor,
    mut dropout: DropoutMode,
) -> Result<ForwardPass> {
    forward_with_hints(spec, params, sample, &mut dropout, &[])
}

/// Like [`forward`], but upsample layers resize to the given (h, w) hints
/// (consumed in layer order) instead of doubling. Decoders use this to
/// reproduce odd pre-pool shapes exactly.
pub fn forward_with_hints(
    spec: &NetworkSpec,
    params: &ParamStore,
    sample: &Tensor,
    dropout: &mut DropoutMode,
    upsample_hints: &[(usize, usize)],
) -> Result<ForwardPass> {
    let want = spec.input_shape();
    if sample.dims != want.dims() {
        return Err(Error::Shape {
            layer: "input".into(),
            msg: format!("sample dims {:?}, spec expects {:?}", sample.dims, want.dims()),
        });
    }
    if params.layers.len() != spec.layers.len() {
        return Err(Error::Shape {
            layer: "params".into(),
            msg: format!(
                "store has {} layers, spec has {}",
                params.layers.len(),
                spec.layers.len()
            ),
        });
    }

    let mut activations = Vec::with_capacity(spec.layers.len() + 1);
    let mut aux = Vec::with_capacity(spec.layers.len());
    activations.push(sample.clone());
    let mut hints = upsample_hints.iter();

    for (i, layer) in spec.layers.iter().enumerate() {
        let input = activations.last().unwrap();
        let (out, a) = match (layer, &params.layers[i]) {
            (&LayerSpec::Conv { kernel, filters }, LayerParams::Conv { w, b }) => {
                (conv_forward(input, w, b, kernel, filters, i)?, Aux::None)
            }
            (LayerSpec::MaxPool, _) => {
                let (out, argmax) = pool_forward(input);
                (out, Aux::Pool { argmax })
            }
            (&LayerSpec::Recurrent { state_dim }, LayerParams::Gru { .. }) => {
                let (out, trace) = gru_forward(input, &params.layers[i], state_dim);
                (out, Aux::Gru(Box::new(trace)))
            }
            (&LayerSpec::Dense { units }, LayerParams::Dense { w, b }) => {
                (dense_forward(input, w, b, units, true, i)?, Aux::None)
            }
            (&LayerSpec::Linear { units }, LayerParams::Dense { w, b }) => {
                (dense_forward(input, w, b, units, false, i)?, Aux::None)
            }
            (&LayerSpec::Softmax { classes }, LayerParams::Dense { w, b }) => {
                let logits = dense_forward(input, w, b, classes, false, i)?;
                (softmax(&logits), Aux::None)
            }
            (&LayerSpec::Dropout { rate }, _) => match dropout {
                DropoutMode::Sample(rng) if rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = (0..input.numel())
                        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    let data = input.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
                    (
                        Tensor::from_vec(&input.dims, data),
                        Aux::Dropout { mask },
                    )
                }
                _ => (input.clone(), Aux::None),
            },
            (LayerSpec::Upsample, _) => {
                let (h, w) = (input.dims[0], input.dims[1]);
                let (th, tw) = hints.next().copied().unwrap_or((h * 2, w * 2));
                (upsample_forward(input, th, tw), Aux::None)
            }
            (layer, params) => {
                return Err(Error::Shape {
                    layer: format!("layer {i} ({})", layer.name()),
                    msg: format!("parameter kind mismatch: {params:?}"),
                })
            }
        };
        activations.push(out);
        aux.push(a);
    }

    Ok(ForwardPass { activations, aux })
}

/// Backpropagate a gradient through the whole network.
///
/// `d_output` is the gradient at the final activation; `injected` adds
/// extra gradients at the outputs of the named layers (feature taps).
/// Returns parameter gradients (same structure as the store) and the
/// gradient at the input sample.
pub fn backward(
    spec: &NetworkSpec,
    params: &ParamStore,
    pass: &ForwardPass,
    d_output: &Tensor,
    injected: &[(usize, Tensor)],
) -> Result<(ParamStore, Tensor)> {
    let mut grads = params.zeros_like();
    let n = spec.layers.len();
    let mut d_act = d_output.clone();
    if d_act.dims != pass.output().dims {
        return Err(Error::Shape {
            layer: "output".into(),
            msg: "gradient dims do not match the final activation".into(),
        });
    }

    for i in (0..n).rev() {
        for (at, extra) in injected {
            if *at == i {
                for (d, e) in d_act.data.iter_mut().zip(&extra.data) {
                    *d += e;
                }
            }
        }
        let input = &pass.activations[i];
        let output = &pass.activations[i + 1];
        d_act = match (&spec.layers[i], &params.layers[i], &pass.aux[i]) {
            (&LayerSpec::Conv { kernel, .. }, LayerParams::Conv { w, .. }, _) => {
                let (dw, db, d_in) = conv_backward(input, output, w, kernel, &d_act);
                if let LayerParams::Conv { w, b } = &mut grads.layers[i] {
                    w.data = dw;
                    b.clone_from_slice(&db);
                }
                d_in
            }
            (LayerSpec::MaxPool, _, Aux::Pool { argmax }) => {
                let mut d_in = Tensor::zeros(&input.dims);
                for (o, &src) in argmax.iter().enumerate() {
                    d_in.data[src] += d_act.data[o];
                }
                d_in
            }
            (LayerSpec::Recurrent { .. }, layer_params, Aux::Gru(trace)) => {
                let (g, d_in) = gru_backward(input, layer_params, trace, &d_act);
                grads.layers[i] = g;
                d_in
            }
            (LayerSpec::Dense { .. }, LayerParams::Dense { w, .. }, _) => {
                let (dw, db, d_in) =
                    dense_backward(input, output, w, &d_act, true);
                if let LayerParams::Dense { w, b } = &mut grads.layers[i] {
                    w.data = dw;
                    b.clone_from_slice(&db);
                }
                d_in
            }
            (LayerSpec::Linear { .. }, LayerParams::Dense { w, .. }, _) => {
                let (dw, db, d_in) =
                    dense_backward(input, output, w, &d_act, false);
                if let LayerParams::Dense { w, b } = &mut grads.layers[i] {
                    w.data = dw;
                    b.clone_from_slice(&db);
                }
                d_in
            }
            (LayerSpec::Softmax { .. }, LayerParams::Dense { w, .. }, _) => {
                // d logits_j = p_j * (d p_j - sum_k d p_k p_k)
                let p = &output.data;
                let dot: f64 = d_act.data.iter().zip(p).map(|(d, pk)| d * pk).sum();
                let d_logits: Vec<f64> = d_act
                    .data
                    .iter()
                    .zip(p)
                    .map(|(d, pj)| pj * (d - dot))
                    .collect();
                let d_logits = Tensor::from_vec(&output.dims, d_logits);
                let (dw, db, d_in) = dense_backward(input, output, w, &d_logits, false);
                if let LayerParams::Dense { w, b } = &mut grads.layers[i] {
                    w.data = dw;
                    b.clone_from_slice(&db);
                }
                d_in
            }
            (LayerSpec::Dropout { .. }, _, Aux::Dropout { mask }) => {
                let data = d_act.data.iter().zip(mask).map(|(d, m)| d * m).collect();
                Tensor::from_vec(&input.dims, data)
            }
            (LayerSpec::Dropout { .. }, _, Aux::None) => d_act,
            (LayerSpec::Upsample, _, _) => {
                let mut d_in = Tensor::zeros(&input.dims);
                let (h, w) = (input.dims[0], input.dims[1]);
                let (th, tw, c) = (output.dims[0], output.dims[1], output.dims[2]);
                for r in 0..th {
                    let sr = r * h / th;
                    for cc in 0..tw {
                        let sc = cc * w / tw;
                        for ch in 0..c {
                            *d_in.at3_mut(sr, sc, ch) += d_act.at3(r, cc, ch);
                        }
                    }
                }
                d_in
            }
            (layer, ..) => {
                return Err(Error::Shape {
                    layer: format!("layer {i} ({})", layer.name()),
                    msg: "no backward rule for this layer/aux combination".into(),
                })
            }
        };
    }

    Ok((grads, d_act))
}

// ---------------------------------------------------------------------------
// Layer kernels
// ---------------------------------------------------------------------------

fn conv_forward(
    input: &Tensor,
    w: &Tensor,
    b: &[f64],
    kernel: usize,
    filters: usize,
    layer_idx: usize,
) -> Result<Tensor> {
    let (h, ww, cin) = (input.dims[0], input.dims[1], input.dims[2]);
    if w.dims != [kernel, kernel, cin, filters] {
        return Err(Error::Shape {
            layer: format!("layer {layer_idx} (conv)"),
            msg: format!(
                "kernel dims {:?} do not match input channels {cin}",
                w.dims
            ),
        });
    }
    let pad = (kernel / 2) as isize;
    let mut out = Tensor::zeros(&[h, ww, filters]);
    for r in 0..h {
        for c in 0..ww {
            for f in 0..filters {
                let mut acc = b[f];
                for kh in 0..kernel {
                    let rr = r as isize + kh as isize - pad;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for kw in 0..kernel {
                        let cc = c as isize + kw as isize - pad;
                        if cc < 0 || cc >= ww as isize {
                            continue;
                        }
                        let in_base = ((rr as usize) * ww + cc as usize) * cin;
                        let w_base = ((kh * kernel + kw) * cin) * filters + f;
                        for ci in 0..cin {
                            acc += input.data[in_base + ci] * w.data[w_base + ci * filters];
                        }
                    }
                }
                *out.at3_mut(r, c, f) = acc.max(0.0);
            }
        }
    }
    Ok(out)
}

fn conv_backward(
    input: &Tensor,
    output: &Tensor,
    w: &Tensor,
    kernel: usize,
    d_out: &Tensor,
) -> (Vec<f64>, Vec<f64>, Tensor) {
    let (h, ww, cin) = (input.dims[0], input.dims[1], input.dims[2]);
    let filters = output.dims[2];
    let pad = (kernel / 2) as isize;
    let mut dw = vec![0.0; w.data.len()];
    let mut db = vec![0.0; filters];
    let mut d_in = Tensor::zeros(&input.dims);

    for r in 0..h {
        for c in 0..ww {
            for f in 0..filters {
                // Rectifier gate: gradient flows only where the output fired.
                if output.at3(r, c, f) <= 0.0 {
                    continue;
                }
                let g = d_out.at3(r, c, f);
                if g == 0.0 {
                    continue;
                }
                db[f] += g;
                for kh in 0..kernel {
                    let rr = r as isize + kh as isize - pad;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for kw in 0..kernel {
                        let cc = c as isize + kw as isize - pad;
                        if cc < 0 || cc >= ww as isize {
                            continue;
                        }
                        let in_base = ((rr as usize) * ww + cc as usize) * cin;
                        let w_base = ((kh * kernel + kw) * cin) * filters + f;
                        for ci in 0..cin {
                            dw[w_base + ci * filters] += input.data[in_base + ci] * g;
                            d_in.data[in_base + ci] += w.data[w_base + ci * filters] * g;
                        }
                    }
                }
            }
        }
    }
    (dw, db, d_in)
}

fn pool_forward(input: &Tensor) -> (Tensor, Vec<usize>) {
    let (h, w, c) = (input.dims[0], input.dims[1], input.dims[2]);
    let oh = (h / 2).max(1);
    let ow = (w / 2).max(1);
    let mut out = Tensor::zeros(&[oh, ow, c]);
    let mut argmax = vec![0usize; oh * ow * c];
    for or in 0..oh {
        let r1 = (2 * or + 2).min(h);
        for oc in 0..ow {
            let c1 = (2 * oc + 2).min(w);
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for r in 2 * or..r1 {
                    for cc in 2 * oc..c1 {
                        let idx = (r * w + cc) * c + ch;
                        if input.data[idx] > best {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                *out.at3_mut(or, oc, ch) = best;
                argmax[(or * ow + oc) * c + ch] = best_idx;
            }
        }
    }
    (out, argmax)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scan the channel axis: step t consumes the flattened (h, w) slice of
/// channel t. Output is the final hidden state as (1, 1, state_dim).
fn gru_forward(input: &Tensor, params: &LayerParams, state_dim: usize) -> (Tensor, GruTrace) {
    let (h, w, c) = (input.dims[0], input.dims[1], input.dims[2]);
    let step_dim = h * w;
    let (wz, wr, wh, uz, ur, uh, bz, br, bh) = match params {
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
        } => (wz, wr, wh, uz, ur, uh, bz, br, bh),
        _ => unreachable!("validated against the spec"),
    };

    let mut trace = GruTrace {
        xs: Vec::with_capacity(c),
        hs: vec![vec![0.0; state_dim]],
        zs: Vec::with_capacity(c),
        rs: Vec::with_capacity(c),
        hbars: Vec::with_capacity(c),
    };

    for t in 0..c {
        let mut x = vec![0.0; step_dim];
        for r in 0..h {
            for cc in 0..w {
                x[r * w + cc] = input.at3(r, cc, t);
            }
        }
        let h_prev = trace.hs.last().unwrap().clone();

        let mut z = bz.clone();
        let mut rg = br.clone();
        let mut a_h = bh.clone();
        for (s, &xs) in x.iter().enumerate() {
            if xs == 0.0 {
                continue;
            }
            let row = s * state_dim;
            for k in 0..state_dim {
                z[k] += wz.data[row + k] * xs;
                rg[k] += wr.data[row + k] * xs;
                a_h[k] += wh.data[row + k] * xs;
            }
        }
        for (j, &hp) in h_prev.iter().enumerate() {
            if hp == 0.0 {
                continue;
            }
            let row = j * state_dim;
            for k in 0..state_dim {
                z[k] += uz.data[row + k] * hp;
                rg[k] += ur.data[row + k] * hp;
            }
        }
        for v in z.iter_mut() {
            *v = sigmoid(*v);
        }
        for v in rg.iter_mut() {
            *v = sigmoid(*v);
        }
        for (j, &hp) in h_prev.iter().enumerate() {
            let gated = rg[j] * hp;
            if gated == 0.0 {
                continue;
            }
            let row = j * state_dim;
            for k in 0..state_dim {
                a_h[k] += uh.data[row + k] * gated;
            }
        }
        let hbar: Vec<f64> = a_h.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = (0..state_dim)
            .map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * hbar[k])
            .collect();

        trace.xs.push(x);
        trace.zs.push(z);
        trace.rs.push(rg);
        trace.hbars.push(hbar);
        trace.hs.push(h_new);
    }

    let out = Tensor::from_vec(&[1, 1, state_dim], trace.hs.last().unwrap().clone());
    (out, trace)
}

fn gru_backward(
    input: &Tensor,
    params: &LayerParams,
    trace: &GruTrace,
    d_out: &Tensor,
) -> (LayerParams, Tensor) {
    let (h, w, c) = (input.dims[0], input.dims[1], input.dims[2]);
    let (wz, wr, wh, uz, ur, uh) = match params {
        LayerParams::Gru {
            wz, wr, wh, uz, ur, uh, ..
        } => (wz, wr, wh, uz, ur, uh),
        _ => unreachable!(),
    };
    let state_dim = d_out.data.len();
    let step_dim = h * w;

    let mut g = params.zeros_like();
    let (gwz, gwr, gwh, guz, gur, guh, gbz, gbr, gbh) = match &mut g {
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
        } => (wz, wr, wh, uz, ur, uh, bz, br, bh),
        _ => unreachable!(),
    };

    let mut d_in = Tensor::zeros(&input.dims);
    let mut dh = d_out.data.clone();

    for t in (0..c).rev() {
        let x = &trace.xs[t];
        let h_prev = &trace.hs[t];
        let z = &trace.zs[t];
        let r = &trace.rs[t];
        let hbar = &trace.hbars[t];

        let mut da_z = vec![0.0; state_dim];
        let mut da_h = vec![0.0; state_dim];
        for k in 0..state_dim {
            let dz = dh[k] * (hbar[k] - h_prev[k]);
            da_z[k] = dz * z[k] * (1.0 - z[k]);
            let dhbar = dh[k] * z[k];
            da_h[k] = dhbar * (1.0 - hbar[k] * hbar[k]);
        }
        // Gradient reaching the reset-gated state r .* h_prev.
        let mut g_gate = vec![0.0; state_dim];
        for j in 0..state_dim {
            let row = j * state_dim;
            let mut acc = 0.0;
            for k in 0..state_dim {
                acc += uh.data[row + k] * da_h[k];
            }
            g_gate[j] = acc;
        }
        let mut da_r = vec![0.0; state_dim];
        for j in 0..state_dim {
            let dr = g_gate[j] * h_prev[j];
            da_r[j] = dr * r[j] * (1.0 - r[j]);
        }

        let mut dh_prev = vec![0.0; state_dim];
        for k in 0..state_dim {
            dh_prev[k] = dh[k] * (1.0 - z[k]) + g_gate[k] * r[k];
        }
        for j in 0..state_dim {
            let row = j * state_dim;
            let mut acc = 0.0;
            for k in 0..state_dim {
                acc += uz.data[row + k] * da_z[k] + ur.data[row + k] * da_r[k];
            }
            dh_prev[j] += acc;
        }

        for s in 0..step_dim {
            let row = s * state_dim;
            let mut dx = 0.0;
            for k in 0..state_dim {
                dx += wz.data[row + k] * da_z[k]
                    + wr.data[row + k] * da_r[k]
                    + wh.data[row + k] * da_h[k];
            }
            let (rr, cc) = (s / w, s % w);
            *d_in.at3_mut(rr, cc, t) += dx;
        }

        for s in 0..step_dim {
            let xs = x[s];
            if xs == 0.0 {
                continue;
            }
            let row = s * state_dim;
            for k in 0..state_dim {
                gwz.data[row + k] += xs * da_z[k];
                gwr.data[row + k] += xs * da_r[k];
                gwh.data[row + k] += xs * da_h[k];
            }
        }
        for j in 0..state_dim {
            let hp = h_prev[j];
            let gated = r[j] * hp;
            let row = j * state_dim;
            for k in 0..state_dim {
                if hp != 0.0 {
                    guz.data[row + k] += hp * da_z[k];
                    gur.data[row + k] += hp * da_r[k];
                }
                if gated != 0.0 {
                    guh.data[row + k] += gated * da_h[k];
                }
            }
        }
        for k in 0..state_dim {
            gbz[k] += da_z[k];
            gbr[k] += da_r[k];
            gbh[k] += da_h[k];
        }

        dh = dh_prev;
    }

    (g, d_in)
}

fn dense_forward(
    input: &Tensor,
    w: &Tensor,
    b: &[f64],
    units: usize,
    relu: bool,
    layer_idx: usize,
) -> Result<Tensor> {
    let din = input.numel();
    if w.dims != [din, units] {
        return Err(Error::Shape {
            layer: format!("layer {layer_idx} (fc)"),
            msg: format!("weights {:?} do not match input of {din}", w.dims),
        });
    }
    let mut out = b.to_vec();
    for (d, &x) in input.data.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let row = d * units;
        for u in 0..units {
            out[u] += w.data[row + u] * x;
        }
    }
    if relu {
        for v in &mut out {
            *v = v.max(0.0);
        }
    }
    Ok(Tensor::from_vec(&[1, 1, units], out))
}

fn dense_backward(
    input: &Tensor,
    output: &Tensor,
    w: &Tensor,
    d_out: &Tensor,
    relu: bool,
) -> (Vec<f64>, Vec<f64>, Tensor) {
    let din = input.numel();
    let units = output.numel();
    let mut d_pre = d_out.data.clone();
    if relu {
        for (d, o) in d_pre.iter_mut().zip(&output.data) {
            if *o <= 0.0 {
                *d = 0.0;
            }
        }
    }
    let mut dw = vec![0.0; w.data.len()];
    let db = d_pre.clone();
    let mut d_in = Tensor::zeros(&input.dims);
    for d in 0..din {
        let x = input.data[d];
        let row = d * units;
        let mut acc = 0.0;
        for u in 0..units {
            dw[row + u] += x * d_pre[u];
            acc += w.data[row + u] * d_pre[u];
        }
        d_in.data[d] = acc;
    }
    (dw, db, d_in)
}

fn softmax(logits: &Tensor) -> Tensor {
    let m = logits.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.data.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Tensor::from_vec(&logits.dims, exps.into_iter().map(|e| e / sum).collect())
}

fn upsample_forward(input: &Tensor, th: usize, tw: usize) -> Tensor {
    let (h, w, c) = (input.dims[0], input.dims[1], input.dims[2]);
    let mut out = Tensor::zeros(&[th, tw, c]);
    for r in 0..th {
        let sr = r * h / th;
        for cc in 0..tw {
            let sc = cc * w / tw;
            for ch in 0..c {
                *out.at3_mut(r, cc, ch) = input.at3(sr, sc, ch);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Batch conveniences
// ---------------------------------------------------------------------------

/// View patch `i` of a set as a (window, window, bands) tensor.
pub fn sample_tensor(set: &crate::cube::PatchSet, i: usize) -> Tensor {
    Tensor::from_vec(
        &[set.window, set.window, set.bands],
        set.patches[i].clone(),
    )
}

/// Class probabilities for every sample (dropout off). Rows sum to 1.
pub fn predict_probs(
    spec: &NetworkSpec,
    params: &ParamStore,
    set: &crate::cube::PatchSet,
) -> Result<Tensor> {
    let classes = spec
        .softmax_classes()
        .ok_or_else(|| Error::Structure("spec has no softmax tail".into()))?;
    let mut out = Tensor::zeros(&[set.len(), classes]);
    for i in 0..set.len() {
        let pass = forward(spec, params, &sample_tensor(set, i), DropoutMode::Off)?;
        out.row_mut(i).copy_from_slice(&pass.output().data);
    }
    Ok(out)
}

/// Flattened feature width at a tap point.
pub fn tap_dim(spec: &NetworkSpec, point: TapPoint) -> usize {
    match point {
        TapPoint::Input => spec.input_shape().numel(),
        TapPoint::Layer(i) => spec.layer_shapes()[i].numel(),
    }
}

/// Flattened activations of every sample at a tap point (dropout off).
pub fn tap_features(
    spec: &NetworkSpec,
    params: &ParamStore,
    set: &crate::cube::PatchSet,
    point: TapPoint,
) -> Result<Tensor> {
    let d = tap_dim(spec, point);
    let mut out = Tensor::zeros(&[set.len(), d]);
    for i in 0..set.len() {
        let pass = forward(spec, params, &sample_tensor(set, i), DropoutMode::Off)?;
        out.row_mut(i).copy_from_slice(&pass.tap(point).data);
    }
    Ok(out)
}
