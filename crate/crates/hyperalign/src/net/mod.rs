//! Declarative network specifications, differentiable forward evaluation
//! with per-layer feature taps, Monte Carlo dropout inference, and mirrored
//! reconstruction decoders.
//!
//! A network is a list of [`LayerSpec`]s over an input of shape
//! (window, window, bands). Convolutions are spatial, same-padded, and mix
//! all input channels; each is followed by a 2x2 max pool (inserted
//! implicitly by the config grammar unless disabled). Recurrent layers read
//! their input as a sequence along the channel axis -- each step is the
//! flattened spatial slice of one channel -- and emit the final hidden
//! state, which is what lets one grammar drive both patch-based and pure
//! spectral models. Rectified-linear activations follow conv and dense
//! layers; recurrent cells are gated with tanh candidates.

mod decoder;
mod forward;
mod grammar;
mod mc;
pub(crate) mod params;

pub use decoder::{decoder_hints, mirrored_decoder};
pub use forward::{
    backward, forward, forward_with_hints, predict_probs, sample_tensor, tap_dim, tap_features,
    DropoutMode, ForwardPass, TapPoint,
};
pub use grammar::{parse_config, parse_config_no_pool, parse_layer_seq, render_config};
pub use mc::{mc_forward, McOutcome};
pub use params::{init_params, LayerParams, ParamStore};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// Spatial convolution over all input channels jointly, same padding,
    /// followed by a rectified-linear activation.
    Conv { kernel: usize, filters: usize },
    /// 2x2 max pooling with stride 2; spatial dims halve (floor), never
    /// dropping below 1. A 1x1 input passes through unchanged.
    MaxPool,
    /// Gated recurrent scan along the channel axis emitting the final state.
    Recurrent { state_dim: usize },
    /// Fully connected layer over the flattened input, rectified-linear.
    Dense { units: usize },
    /// Fully connected layer with identity activation (decoder output
    /// stages; no grammar token).
    Linear { units: usize },
    /// Fully connected projection to class logits plus softmax.
    Softmax { classes: usize },
    /// Inverted dropout; active only when a forward pass samples masks.
    Dropout { rate: f64 },
    /// Nearest-neighbor spatial upsampling (decoder-only; no grammar token).
    Upsample,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool => "maxpool",
            LayerSpec::Recurrent { .. } => "recur",
            LayerSpec::Dense { .. } => "fc",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Softmax { .. } => "softmax",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Upsample => "upsample",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Structure(msg));
        match *self {
            LayerSpec::Conv { kernel, filters } if kernel < 1 || filters < 1 => {
                bad(format!("conv needs kernel and filters >= 1, got conv{kernel}-{filters}"))
            }
            LayerSpec::Recurrent { state_dim } if state_dim < 1 => {
                bad("recurrent state_dim must be >= 1".into())
            }
            LayerSpec::Dense { units } | LayerSpec::Linear { units } if units < 1 => {
                bad("fc units must be >= 1".into())
            }
            LayerSpec::Softmax { classes } if classes < 1 => {
                bad("softmax classes must be >= 1".into())
            }
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                bad(format!("dropout rate must be in [0, 1), got {rate}"))
            }
            _ => Ok(()),
        }
    }
}

/// The spatial extent of one activation: height, width, channels. Vectors
/// are carried as (1, 1, d).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub fn numel(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.h, self.w, self.c]
    }
}

/// An ordered layer sequence over an input of shape
/// (input_window, input_window, input_bands).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_bands: usize,
    /// Spatial side of input samples. The grammar only fixes the band
    /// count; the window comes from the data and defaults to 1.
    pub input_window: usize,
    pub layers: Vec<LayerSpec>,
    /// True when a max pool is implicitly inserted after every conv.
    pub auto_pool: bool,
}

impl NetworkSpec {
    pub fn new(input_bands: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec {
            input_bands,
            input_window: 1,
            layers,
            auto_pool: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.input_window = window;
        self
    }

    /// Structural rules: at most one softmax and only as the final layer;
    /// with auto_pool every conv is immediately followed by a max pool; no
    /// conv or pool may appear after a recurrent layer.
    pub fn validate(&self) -> Result<()> {
        if self.input_bands == 0 || self.input_window == 0 {
            return Err(Error::Structure("input bands and window must be >= 1".into()));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::Softmax { .. }) && i + 1 != n {
                return Err(Error::Structure(format!(
                    "softmax must be the final layer, found it at position {i} of {n}"
                )));
            }
        }
        if self.auto_pool {
            for (i, layer) in self.layers.iter().enumerate() {
                if matches!(layer, LayerSpec::Conv { .. })
                    && !matches!(self.layers.get(i + 1), Some(LayerSpec::MaxPool))
                {
                    return Err(Error::Structure(format!(
                        "conv at position {i} is not followed by a max pool"
                    )));
                }
            }
        }
        if let Some(first_recur) = self
            .layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Recurrent { .. }))
        {
            for (i, layer) in self.layers.iter().enumerate().skip(first_recur) {
                if matches!(layer, LayerSpec::Conv { .. } | LayerSpec::MaxPool) {
                    return Err(Error::Structure(format!(
                        "{} at position {i} appears after a recurrent layer",
                        layer.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn input_shape(&self) -> Shape {
        Shape {
            h: self.input_window,
            w: self.input_window,
            c: self.input_bands,
        }
    }

    /// The activation shape after every layer; element i is the output of
    /// layer i. Upsample layers are assumed to double (hints are a forward
    /// -time concern).
    pub fn layer_shapes(&self) -> Vec<Shape> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape();
        for layer in &self.layers {
            cur = match *layer {
                LayerSpec::Conv { filters, .. } => Shape { c: filters, ..cur },
                LayerSpec::MaxPool => Shape {
                    h: (cur.h / 2).max(1),
                    w: (cur.w / 2).max(1),
                    c: cur.c,
                },
                LayerSpec::Recurrent { state_dim } => Shape {
                    h: 1,
                    w: 1,
                    c: state_dim,
                },
                LayerSpec::Dense { units } | LayerSpec::Linear { units } => {
                    Shape { h: 1, w: 1, c: units }
                }
                LayerSpec::Softmax { classes } => Shape {
                    h: 1,
                    w: 1,
                    c: classes,
                },
                LayerSpec::Dropout { .. } => cur,
                LayerSpec::Upsample => Shape {
                    h: cur.h * 2,
                    w: cur.w * 2,
                    c: cur.c,
                },
            };
            shapes.push(cur);
        }
        shapes
    }

    /// Output shape of the final layer.
    pub fn output_shape(&self) -> Shape {
        self.layer_shapes().last().copied().unwrap_or(self.input_shape())
    }

    /// Class count of the softmax tail, if present.
    pub fn softmax_classes(&self) -> Option<usize> {
        match self.layers.last() {
            Some(LayerSpec::Softmax { classes }) => Some(*classes),
            _ => None,
        }
    }

    pub fn has_recurrent(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Recurrent { .. }))
    }

    pub fn has_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Dropout { .. }))
    }

    /// The spec with its softmax tail removed (the trunk).
    pub fn trunk(&self) -> NetworkSpec {
        let mut spec = self.clone();
        if matches!(spec.layers.last(), Some(LayerSpec::Softmax { .. })) {
            spec.layers.pop();
        }
        spec
    }

    /// Indices of parameterized layers (conv, recurrent, dense, softmax).
    pub fn parameterized_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| {
                matches!(
                    l,
                    LayerSpec::Conv { .. }
                        | LayerSpec::Recurrent { .. }
                        | LayerSpec::Dense { .. }
                        | LayerSpec::Linear { .. }
                        | LayerSpec::Softmax { .. }
                )
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// A dual-branch adaptation network: one trunk per domain, a list of
/// (source layer, target layer) tap pairs tied by alignment modules, and a
/// classification head over the concatenated per-pair projections.
///
/// Tapped features generally have different widths across branches, so each
/// pair owns a learned linear projection per side into a `shared_dim`
/// -dimensional latent space where the alignment loss operates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FannSpec {
    pub source_branch: NetworkSpec,
    pub target_branch: NetworkSpec,
    pub aligned_pairs: Vec<(usize, usize)>,
    pub shared_dim: usize,
    /// Layer sequence over the concatenated projections, ending in softmax.
    pub head: Vec<LayerSpec>,
}

impl FannSpec {
    pub fn new(
        source_branch: NetworkSpec,
        target_branch: NetworkSpec,
        aligned_pairs: Vec<(usize, usize)>,
        shared_dim: usize,
        head: Vec<LayerSpec>,
    ) -> Result<Self> {
        let spec = FannSpec {
            source_branch,
            target_branch,
            aligned_pairs,
            shared_dim,
            head,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.source_branch.validate()?;
        self.target_branch.validate()?;
        if self.source_branch.softmax_classes().is_some()
            || self.target_branch.softmax_classes().is_some()
        {
            return Err(Error::Structure(
                "branches are trunks; the classifier lives in the head".into(),
            ));
        }
        if self.aligned_pairs.is_empty() {
            return Err(Error::Structure("at least one aligned layer pair is required".into()));
        }
        let ns = self.source_branch.layers.len();
        let nt = self.target_branch.layers.len();
        let mut prev: Option<(usize, usize)> = None;
        for &(s, t) in &self.aligned_pairs {
            if s >= ns || t >= nt {
                return Err(Error::Structure(format!(
                    "aligned pair ({s}, {t}) references a missing layer (branch depths {ns}, {nt})"
                )));
            }
            if let Some((ps, pt)) = prev {
                if s <= ps || t <= pt {
                    return Err(Error::Structure(
                        "aligned pairs must reference layers in strictly increasing order".into(),
                    ));
                }
            }
            prev = Some((s, t));
        }
        if self.shared_dim == 0 {
            return Err(Error::Structure("shared_dim must be >= 1".into()));
        }
        match self.head.last() {
            Some(LayerSpec::Softmax { .. }) => {}
            _ => {
                return Err(Error::Structure(
                    "the head must end in a softmax layer".into(),
                ))
            }
        }
        for layer in &self.head {
            layer.validate()?;
            if matches!(
                layer,
                LayerSpec::Conv { .. } | LayerSpec::MaxPool | LayerSpec::Upsample
            ) {
                return Err(Error::Structure(
                    "the head operates on flat features; only fc/dropout/softmax are allowed"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    /// Number of classes predicted by the head.
    pub fn head_classes(&self) -> usize {
        match self.head.last() {
            Some(LayerSpec::Softmax { classes }) => *classes,
            _ => unreachable!("validated head ends in softmax"),
        }
    }

    /// The head as a network over the concatenated projected features.
    pub fn head_spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_bands: self.shared_dim * self.aligned_pairs.len(),
            input_window: 1,
            layers: self.head.clone(),
            auto_pool: false,
        }
    }
}
