//! Desk-scale training on the procedural families, followed by held-out
//! reconstruction metrics, latent decoupling and upsampling.
//!
//! `cargo run --release --example train_desk -- [epochs] [shapes_per_family]`

use gridsampler::geometry::{point_to_mesh_distance, ShapeFamily};
use gridsampler::metrics::{eval_reconstruction, latent_decoupling, ReconstructionConfig};
use gridsampler::rng::seeded;
use gridsampler::training::{train, Dataset, TrainConfig, MESH_RESOLUTION};

fn main() -> gridsampler::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let epochs = args.first().copied().unwrap_or(15);
    let per_family = args.get(1).copied().unwrap_or(100);

    let data = Dataset::procedural(&ShapeFamily::ALL, per_family, MESH_RESOLUTION, 7)?;
    let (train_set, test_set) = data.split_holdout((per_family / 10).max(2));
    let mut cfg = TrainConfig {
        epochs,
        batch_size: 16,
        seed: 2024,
        ..Default::default()
    };
    cfg.weights.consistency = 1.0;
    let outcome = train(&train_set, &cfg, None, |_, _| Ok(()))?;
    let model = &outcome.model;

    let rec = eval_reconstruction(model, &test_set, &ReconstructionConfig::default())?;
    println!(
        "held-out: chamfer {:.4} ± {:.4}, bce/voxel {:.4}, distance {:.4}, {:.0} points",
        rec.chamfer.mean, rec.chamfer.std, rec.bce_per_voxel.mean, rec.distance.mean, rec.points.mean
    );
    let d = latent_decoupling(model, &test_set, 4, 2048, 1)?;
    println!("latent spread intra/inter {:.4}, retrieval {:.3}", d.ratio, d.retrieval);

    let shape = &test_set.shapes[0];
    for points in [256, 2048] {
        let input = shape.sampler().sample(points, &mut seeded(5));
        let dense = model.sample_cloud(&model.encode(&input)?, 8, 5)?;
        let dist = point_to_mesh_distance(&dense, &shape.mesh)?;
        println!("{}: {points} input points -> {} points, distance {:.4}", shape.name, dense.len(), dist.mean);
    }
    Ok(())
}
