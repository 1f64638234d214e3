//! The config grammar: arrow-separated tokens `input-N`, `convK-F`,
//! `recur-D`, `fc-U`, `softmax-C`, `dropout-R`. Parsing inserts an implicit
//! max pool after every conv (the usual convention for these summaries);
//! rendering omits the implicit pools so that canonical strings round-trip.

use crate::error::{Error, Result};

use super::{LayerSpec, NetworkSpec};

/// Parse a full network config string, e.g.
/// `input-103 → conv3-32 → recur-256 → fc-64 → softmax-9`. Both `→` and
/// `->` separate tokens. The first token must be `input-N`.
pub fn parse_config(text: &str) -> Result<NetworkSpec> {
    parse_with_pooling(text, true)
}

/// Like [`parse_config`] but without the implicit max pool after each conv;
/// for pure spectral (1x1 window) models where spatial pooling is a no-op.
pub fn parse_config_no_pool(text: &str) -> Result<NetworkSpec> {
    parse_with_pooling(text, false)
}

fn parse_with_pooling(text: &str, auto_pool: bool) -> Result<NetworkSpec> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::Parse {
            index: 0,
            token: String::new(),
            msg: "empty config string".into(),
        });
    }

    let (first_idx, first) = &tokens[0];
    let input_bands = match parse_token(first)? {
        Token::Input(bands) => bands,
        _ => {
            return Err(Error::Parse {
                index: *first_idx,
                token: first.clone(),
                msg: "config must start with input-N".into(),
            })
        }
    };

    let mut layers = Vec::new();
    for (index, token) in &tokens[1..] {
        let layer = match parse_token(token) {
            Ok(Token::Input(_)) => {
                return Err(Error::Parse {
                    index: *index,
                    token: token.clone(),
                    msg: "input-N may only appear first".into(),
                })
            }
            Ok(Token::Layer(layer)) => layer,
            Err(mut e) => {
                if let Error::Parse { index: i, .. } = &mut e {
                    *i = *index;
                }
                return Err(e);
            }
        };
        let is_conv = matches!(layer, LayerSpec::Conv { .. });
        layers.push(layer);
        if is_conv && auto_pool {
            layers.push(LayerSpec::MaxPool);
        }
    }

    let spec = NetworkSpec {
        input_bands,
        input_window: 1,
        layers,
        auto_pool,
    };
    spec.validate()?;
    Ok(spec)
}

/// Parse a partial layer sequence with no `input-N` prefix, e.g.
/// `fc-64 → softmax-6` for a fine-tuning head.
pub fn parse_layer_seq(text: &str) -> Result<Vec<LayerSpec>> {
    let mut layers = Vec::new();
    for (index, token) in tokenize(text) {
        match parse_token(&token) {
            Ok(Token::Input(_)) => {
                return Err(Error::Parse {
                    index,
                    token,
                    msg: "layer sequences do not take an input-N token".into(),
                })
            }
            Ok(Token::Layer(layer)) => layers.push(layer),
            Err(mut e) => {
                if let Error::Parse { index: i, .. } = &mut e {
                    *i = index;
                }
                return Err(e);
            }
        }
    }
    Ok(layers)
}

/// Render a spec back to its canonical config string. Implicit max pools
/// are omitted; explicit structural layers that have no grammar token
/// (maxpool without auto_pool, upsample) render under debug names and do
/// not round-trip through [`parse_config`].
pub fn render_config(spec: &NetworkSpec) -> String {
    let mut tokens = vec![format!("input-{}", spec.input_bands)];
    for layer in &spec.layers {
        match layer {
            LayerSpec::Conv { kernel, filters } => tokens.push(format!("conv{kernel}-{filters}")),
            LayerSpec::MaxPool => {
                if !spec.auto_pool {
                    tokens.push("maxpool".into());
                }
            }
            LayerSpec::Recurrent { state_dim } => tokens.push(format!("recur-{state_dim}")),
            LayerSpec::Dense { units } => tokens.push(format!("fc-{units}")),
            LayerSpec::Linear { units } => tokens.push(format!("linear-{units}")),
            LayerSpec::Softmax { classes } => tokens.push(format!("softmax-{classes}")),
            LayerSpec::Dropout { rate } => tokens.push(format!("dropout-{rate}")),
            LayerSpec::Upsample => tokens.push("upsample".into()),
        }
    }
    tokens.join(" → ")
}

enum Token {
    Input(usize),
    Layer(LayerSpec),
}

fn tokenize(text: &str) -> Vec<(usize, String)> {
    text.replace("->", "→")
        .split('→')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .enumerate()
        .collect()
}

fn parse_token(token: &str) -> Result<Token> {
    let err = |msg: &str| Error::Parse {
        index: 0,
        token: token.to_string(),
        msg: msg.into(),
    };

    if let Some(rest) = token.strip_prefix("input-") {
        let bands: usize = rest.parse().map_err(|_| err("bad band count"))?;
        return Ok(Token::Input(bands));
    }
    if let Some(rest) = token.strip_prefix("conv") {
        let (k, f) = rest
            .split_once('-')
            .ok_or_else(|| err("conv token must look like convK-F"))?;
        let kernel: usize = k.parse().map_err(|_| err("bad conv kernel size"))?;
        let filters: usize = f.parse().map_err(|_| err("bad conv filter count"))?;
        return Ok(Token::Layer(LayerSpec::Conv { kernel, filters }));
    }
    if let Some(rest) = token.strip_prefix("recur-") {
        let state_dim: usize = rest.parse().map_err(|_| err("bad recurrent dimension"))?;
        return Ok(Token::Layer(LayerSpec::Recurrent { state_dim }));
    }
    if let Some(rest) = token.strip_prefix("fc-") {
        let units: usize = rest.parse().map_err(|_| err("bad fc width"))?;
        return Ok(Token::Layer(LayerSpec::Dense { units }));
    }
    if let Some(rest) = token.strip_prefix("softmax-") {
        let classes: usize = rest.parse().map_err(|_| err("bad softmax class count"))?;
        return Ok(Token::Layer(LayerSpec::Softmax { classes }));
    }
    if let Some(rest) = token.strip_prefix("dropout-") {
        let rate: f64 = rest.parse().map_err(|_| err("bad dropout rate"))?;
        return Ok(Token::Layer(LayerSpec::Dropout { rate }));
    }
    Err(err("unknown token"))
}
