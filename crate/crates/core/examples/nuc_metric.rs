//! Uniformity of surface samples: an area-uniform cloud against one that is
//! biased toward the top half of the shape.

use gridsampler::geometry::{procedural_shape, sample_surface, PointCloud, ShapeParams};
use gridsampler::metrics::{nuc, NucConfig};

fn main() -> gridsampler::Result<()> {
    let mesh = procedural_shape(&ShapeParams::Box { extents: [1.2, 0.8, 1.0] }, 16)?;
    let uniform = sample_surface(&mesh, 4000, 1)?;
    let dense_top: PointCloud = sample_surface(&mesh, 8000, 2)?
        .points()
        .iter()
        .enumerate()
        .filter(|(i, p)| p.y > 0.0 || i % 3 == 0)
        .map(|(_, p)| *p)
        .collect();
    let cfg = NucConfig {
        disk_count: 2000,
        ..Default::default()
    };
    let a = nuc(&[uniform], std::slice::from_ref(&mesh), &cfg)?;
    let b = nuc(&[dense_top], &[mesh], &cfg)?;
    println!("{:>8} {:>12} {:>12}", "area", "uniform", "biased");
    for (x, y) in a.iter().zip(&b) {
        println!("{:>8} {:>12.4} {:>12.4}", x.area_fraction, x.nuc, y.nuc);
    }
    Ok(())
}
