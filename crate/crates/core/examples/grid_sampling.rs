//! The grid parameterization on its own: an occupancy field defines a
//! distribution over topologies, each draw is realized through an offset field.

use gridsampler::grid::{realize_points, sample_topology, topology_probability, GridSpec, OffsetField};
use gridsampler::rng::seeded;

fn main() -> gridsampler::Result<()> {
    let grid = GridSpec::unit_cube(4)?;
    // Occupancy concentrated on a shell around the center.
    let occupancy: Vec<f64> = (0..grid.cells())
        .map(|i| {
            let c = grid.flat_center(i);
            let r = (c.x * c.x + c.y * c.y + c.z * c.z).sqrt();
            (-(r - 0.8).powi(2) / 0.05).exp().clamp(0.01, 0.99)
        })
        .collect();
    let offsets = OffsetField::new(4, (0..3 * grid.cells()).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect())?;
    println!("expected points per draw: {:.2}", occupancy.iter().sum::<f64>());
    let mut rng = seeded(3);
    for draw in 0..5 {
        let topology = sample_topology(&occupancy, 4, &mut rng)?;
        let p = topology_probability(&occupancy, &topology)?;
        let cloud = realize_points(&topology, &offsets, &grid)?;
        println!("draw {draw}: {} points, log P(T) = {:.3}", cloud.len(), p.log_probability);
    }
    Ok(())
}
