//! Builds a small conv + sigmoid graph, runs backward and compares the
//! gradients against central finite differences.

use gridsampler::rng::seeded;
use gridsampler::tensor::gradcheck::check_gradients;
use gridsampler::tensor::Tensor;
use rand::Rng;

fn main() -> gridsampler::Result<()> {
    let mut rng = seeded(1);
    let mut random = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0));
    let inputs = [random(&[1, 2, 4, 4, 4]), random(&[3, 2, 3, 3, 3]), random(&[3])];
    let report = check_gradients(&inputs, 1e-5, |g, v| {
        let y = g.conv3d(v[0], v[1], 1, 1)?;
        let y = g.channel_bias(y, v[2])?;
        let y = g.sigmoid(y);
        let sq = g.mul(y, y)?;
        Ok(g.sum(sq))
    })?;
    for (name, r) in ["input", "kernel", "bias"].iter().zip(&report) {
        println!("{name:>6}: relative error {:.2e}, max abs {:.2e}", r.relative_error, r.max_abs_error);
    }
    Ok(())
}
