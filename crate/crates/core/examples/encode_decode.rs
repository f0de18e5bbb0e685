//! Encodes a procedural torus with a freshly initialized network, decodes the
//! code and samples clouds of growing size from the same descriptor.

use gridsampler::geometry::{procedural_shape, sample_surface, ShapeParams};
use gridsampler::losses::mean_chamfer;
use gridsampler::model::{Model, ModelConfig};

fn main() -> gridsampler::Result<()> {
    let model = Model::new(ModelConfig::desk(), 0)?;
    let mesh = procedural_shape(&ShapeParams::Torus { major: 0.7, minor: 0.2, height: 0.25 }, 32)?;
    let cloud = sample_surface(&mesh, 2048, 1)?;
    let z = model.encode(&cloud)?;
    let norm = z.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("latent code: {} values, norm {norm:.4}", z.dim());
    let descriptor = model.decode(&z)?;
    println!("expected points per pass: {:.1}", descriptor.expected_count());
    for passes in [1, 4, 16] {
        let out = model.sample_descriptor(&descriptor, passes, 7)?;
        println!("{passes:>2} passes: {:>5} points, mean chamfer to input {:.4}", out.len(), mean_chamfer(&out, &cloud)?);
    }
    Ok(())
}
