//! Builds a small convolutional classifier on the tape, runs backward and
//! compares every parameter gradient against central differences.
//!
//! cargo run --release --example gradient_check

use npc::nn::{forward, ModelSpec, ParamSet};
use npc::tensor::gradcheck::grad_check;
use npc::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> npc::Result<()> {
    let mut spec = ModelSpec::desk([1, 8, 8], 4);
    spec.conv_channels = vec![3, 4];
    spec.dense_hidden = vec![6];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params: ParamSet<f64> = ParamSet::init(&spec, &mut rng)?;
    let pixels: Vec<f64> = (0..2 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
    let x = Tensor::from_f64(&[2, 1, 8, 8], &pixels)?;

    let err = grad_check(
        |g, vars| {
            let input = g.constant(x.clone());
            let fwd = forward(&spec, g, vars, input, true, &mut ChaCha8Rng::seed_from_u64(2))?;
            g.masked_cross_entropy(fwd.logits, &[0, 3], &[0, 3])
        },
        &params.tensors,
        1e-6,
    )?;
    println!("{} parameters in {} tensors", params.element_count(), params.len());
    println!("worst relative gradient error: {err:.3e}");
    Ok(())
}
