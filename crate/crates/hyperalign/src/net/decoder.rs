//! Mirrored reconstruction decoders: reverse a feed-forward trunk so its
//! deepest feature maps back to the input shape, enabling a reconstruction
//! loss. Conv+pool stages become upsample+conv stages, dense layers are
//! transposed, dropout is dropped. Recurrent trunks are not mirrored --
//! there is no principled inverse of a final-state scan -- and are rejected.

use crate::error::{Error, Result};

use super::{LayerSpec, NetworkSpec, Shape};

/// Build the decoder for an encoder trunk. The decoder's input is the
/// encoder's deepest activation; running encoder then decoder reproduces
/// the input shape (exactly for even spatial dims, via upsample hints from
/// the encoder's pre-pool shapes otherwise).
pub fn mirrored_decoder(encoder: &NetworkSpec) -> Result<NetworkSpec> {
    encoder.validate()?;
    if encoder.softmax_classes().is_some() {
        return Err(Error::argument(
            "mirror the trunk, not the classifier: strip the softmax tail first",
        ));
    }
    if encoder.has_recurrent() {
        return Err(Error::UnsupportedStructure(
            "decoders are defined for feed-forward trunks only; recurrent layers cannot be mirrored"
                .into(),
        ));
    }

    let shapes = encoder.layer_shapes();
    let deepest: Shape = *shapes.last().unwrap_or(&encoder.input_shape());
    if deepest.h != deepest.w {
        return Err(Error::UnsupportedStructure(
            "decoder mirroring assumes square feature maps".into(),
        ));
    }

    let mut layers = Vec::new();
    for (i, layer) in encoder.layers.iter().enumerate().rev() {
        let input_shape: Shape = if i == 0 {
            encoder.input_shape()
        } else {
            shapes[i - 1]
        };
        // A dense stage that reconstructs the original input (i == 0)
        // carries no rectifier: a clamped output cannot recover from an
        // all-negative initialization. Conv stages keep theirs; spectra
        // are nonnegative and the spatial weight sharing keeps units alive.
        match layer {
            LayerSpec::Conv { kernel, .. } => {
                // Transposed-conv equivalent: a same conv back to the
                // encoder stage's input channel count.
                layers.push(LayerSpec::Conv {
                    kernel: *kernel,
                    filters: input_shape.c,
                });
            }
            LayerSpec::MaxPool => layers.push(LayerSpec::Upsample),
            LayerSpec::Dense { .. } | LayerSpec::Linear { .. } => {
                let units = input_shape.numel();
                layers.push(if i == 0 {
                    LayerSpec::Linear { units }
                } else {
                    LayerSpec::Dense { units }
                });
            }
            LayerSpec::Dropout { .. } => {}
            LayerSpec::Softmax { .. } | LayerSpec::Recurrent { .. } => unreachable!(),
            LayerSpec::Upsample => {
                return Err(Error::UnsupportedStructure(
                    "encoders may not contain upsample layers".into(),
                ))
            }
        }
    }

    Ok(NetworkSpec {
        input_bands: deepest.c,
        input_window: deepest.h,
        layers,
        auto_pool: false,
    })
}

/// The (h, w) hints a decoder needs to reproduce the encoder input exactly:
/// the pre-pool shape of each encoder pool stage, deepest first.
pub fn decoder_hints(encoder: &NetworkSpec) -> Vec<(usize, usize)> {
    let shapes = encoder.layer_shapes();
    let mut hints = Vec::new();
    for (i, layer) in encoder.layers.iter().enumerate() {
        if matches!(layer, LayerSpec::MaxPool) {
            let pre = if i == 0 {
                encoder.input_shape()
            } else {
                shapes[i - 1]
            };
            hints.push((pre.h, pre.w));
        }
    }
    hints.reverse();
    hints
}
