//! Parse network summaries from the compact config grammar, inspect layer
//! shapes, and run a forward pass with feature taps.
//!
//! ```bash
//! cargo run --release --example network_grammar
//! ```

use hyperalign::net::{
    forward, init_params, parse_config, render_config, DropoutMode, TapPoint,
};
use hyperalign::tensor::Tensor;

fn main() -> hyperalign::Result<()> {
    // A convolutional-recurrent classifier over a 103-band input: every
    // conv gets an implicit 2x2 max pool, the recurrent layers scan the
    // channel axis, fc layers finish into a 9-way softmax.
    let text = "input-103 → conv3-32 → conv3-32 → conv3-64 → conv3-64 \
                → recur-256 → recur-512 → fc-64 → fc-64 → softmax-9";
    let spec = parse_config(text)?.with_window(5);
    println!("parsed:   {text}");
    println!("rendered: {}", render_config(&spec));

    println!("\nlayer shapes on a 5x5 window:");
    let shapes = spec.layer_shapes();
    for (i, (layer, shape)) in spec.layers.iter().zip(&shapes).enumerate() {
        println!(
            "  {i:2} {:8} -> {}x{}x{}",
            layer.name(),
            shape.h,
            shape.w,
            shape.c
        );
    }

    let params = init_params(&spec, 0)?;
    let sample = Tensor::from_vec(
        &[5, 5, 103],
        (0..5 * 5 * 103).map(|i| (i as f64 * 0.37).sin().abs() * 0.8).collect(),
    );
    let pass = forward(&spec, &params, &sample, DropoutMode::Off)?;
    let probs = &pass.output().data;
    println!("\nsoftmax output (sums to {:.9}):", probs.iter().sum::<f64>());
    println!("  {probs:.4?}");

    // Any layer's activation is retrievable by id, e.g. the first
    // recurrent state vector.
    let tap = pass.tap(TapPoint::Layer(8));
    println!("recurrent tap at layer 8: {} values", tap.numel());

    // The grammar also rejects malformed summaries with positions.
    let err = parse_config("input-5 → conv3-8 → wiggle-7 → softmax-2").unwrap_err();
    println!("\nbad token diagnostics: {err}");
    Ok(())
}
