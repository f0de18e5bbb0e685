use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gridsampler::cli::{run, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
use gridsampler::geometry::{point_to_mesh_distance, sample_surface, PointCloud};
use gridsampler::io::{
    load_checkpoint, read_cloud, read_latent, read_manifest, read_mesh, save_checkpoint, write_cloud, RunConfig,
};
use gridsampler::model::{Model, ModelConfig};
use gridsampler::training::TrainConfig;
use tempfile::TempDir;

fn cli(args: &[&str]) -> i32 {
    let mut all = vec!["gridsampler"];
    all.extend_from_slice(args);
    run(all)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_config() -> RunConfig {
    RunConfig {
        train: TrainConfig {
            epochs: 2,
            batch_size: 4,
            samplings_per_surface: 2,
            input_points: 200,
            seed: 3,
            model: ModelConfig {
                resolution: 4,
                point_widths: vec![8],
                fine_blocks: 1,
                coarse_blocks: 0,
                latent_dim: 8,
                feature_channels: 4,
                sampler_hidden: 8,
            },
            ..Default::default()
        },
        ..Default::default()
    }
}

fn gen(dir: &Path, seed: &str) -> i32 {
    cli(&["dataset", "gen", "--out", p(dir), "--count", "2", "--seed", seed, "--mesh-resolution", "10"])
}

#[test]
fn binary_reports_usage_errors() {
    let status = Command::new(env!("CARGO_BIN_EXE_gridsampler"))
        .args(["upsample", "--passes", "0"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    assert!(!status.stderr.is_empty());
    let help = Command::new(env!("CARGO_BIN_EXE_gridsampler")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(EXIT_OK));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(cli(&["reconstruct"]), EXIT_USAGE);
    assert_eq!(cli(&["eval", "chamfer", "--a", "x.xyz"]), EXIT_USAGE);
}

#[test]
fn missing_input_is_data_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.xyz");
    assert_eq!(cli(&["eval", "chamfer", "--a", p(&missing), "--b", p(&missing)]), EXIT_DATA);
}

#[test]
fn dataset_generation_is_deterministic_and_areas_match() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(gen(&a, "5"), EXIT_OK);
    assert_eq!(gen(&b, "5"), EXIT_OK);
    assert_eq!(gen(&c, "6"), EXIT_OK);
    let manifest = read_manifest(&a).unwrap();
    assert_eq!(manifest.len(), 6);
    let mut differs = false;
    for entry in &manifest {
        let bytes_a = fs::read(a.join(&entry.path)).unwrap();
        assert_eq!(bytes_a, fs::read(b.join(&entry.path)).unwrap());
        differs |= bytes_a != fs::read(c.join(&entry.path)).unwrap();
        // Independent area: half cross-product sum over the stored faces.
        let mesh = read_mesh(&a.join(&entry.path)).unwrap();
        let area: f64 = mesh
            .triangles()
            .iter()
            .map(|t| {
                let [x, y, z] = t.map(|i| mesh.vertices()[i]);
                0.5 * (y - x).cross(&(z - x)).norm()
            })
            .sum();
        assert!((area - entry.mesh_area).abs() <= 1e-9 * area, "{}", entry.path.display());
        let (lo, hi) = mesh.bounds();
        for k in 0..3 {
            assert!(lo[k] >= -1.0 && hi[k] <= 1.0);
        }
    }
    assert!(differs);
    assert_eq!(fs::read(a.join("manifest.txt")).unwrap(), fs::read(b.join("manifest.txt")).unwrap());
}

#[test]
fn chamfer_of_a_cloud_with_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    assert_eq!(gen(&data, "1"), EXIT_OK);
    let mesh = read_mesh(&data.join("sphere_0000.ply")).unwrap();
    let cloud = sample_surface(&mesh, 300, 2).unwrap();
    let xyz = dir.path().join("c.xyz");
    write_cloud(&xyz, &cloud).unwrap();
    let report = dir.path().join("r.txt");
    assert_eq!(cli(&["eval", "chamfer", "--a", p(&xyz), "--b", p(&xyz), "--out", p(&report)]), EXIT_OK);
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.lines().any(|l| l == "chamfer_sum 0"), "{text}");
    assert!(text.lines().any(|l| l == "points_a 300"), "{text}");

    let report = dir.path().join("d.txt");
    let mesh_path = data.join("sphere_0000.ply");
    assert_eq!(cli(&["eval", "distance", "--cloud", p(&xyz), "--mesh", p(&mesh_path), "--out", p(&report)]), EXIT_OK);
    let text = fs::read_to_string(&report).unwrap();
    let mean: f64 = text.lines().find_map(|l| l.strip_prefix("distance_mean ")).unwrap().parse().unwrap();
    // Points written at 9 significant digits sit within rounding of the surface.
    assert!(mean < 1e-7, "{mean}");

    let report = dir.path().join("n.txt");
    let code = cli(&[
        "eval", "nuc", "--cloud", p(&xyz), "--mesh", p(&mesh_path), "--disks", "200", "--fractions", "0.01,0.02",
        "--out", p(&report),
    ]);
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");
    assert_eq!(cli(&["eval", "nuc", "--cloud", p(&xyz), "--cloud", p(&xyz), "--mesh", p(&mesh_path)]), EXIT_DATA);
}

#[test]
fn train_encode_interpolate_upsample_pipeline() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    assert_eq!(gen(&data, "9"), EXIT_OK);
    let config = dir.path().join("run.cfg");
    fs::write(&config, tiny_config().serialize()).unwrap();
    let out = dir.path().join("run");
    assert_eq!(cli(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&out)]), EXIT_OK);
    for f in ["epoch_1.nsck", "epoch_2.nsck", "learning_curve.txt", "report.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let curve = fs::read_to_string(out.join("learning_curve.txt")).unwrap();
    assert_eq!(curve.lines().count(), 2);
    assert!(curve.starts_with("epoch 1 chamfer "));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("params_decoder_total "));

    let ckpt = out.join("epoch_2.nsck");
    let ck = load_checkpoint(&ckpt).unwrap();
    assert_eq!(RunConfig::parse(&ck.config, "embedded").unwrap(), tiny_config());
    let model = Model::from_params(tiny_config().train.model, ck.params).unwrap();

    let clouds: Vec<PathBuf> = ["sphere_0000", "box_0001"]
        .iter()
        .map(|name| {
            let cloud = sample_surface(&read_mesh(&data.join(format!("{name}.ply"))).unwrap(), 400, 4).unwrap();
            let path = dir.path().join(format!("{name}.xyz"));
            write_cloud(&path, &cloud).unwrap();
            path
        })
        .collect();
    let za = dir.path().join("a.latent");
    let zb = dir.path().join("b.latent");
    assert_eq!(cli(&["encode", "--ckpt", p(&ckpt), "--in", p(&clouds[0]), "--out", p(&za)]), EXIT_OK);
    assert_eq!(cli(&["encode", "--ckpt", p(&ckpt), "--in", p(&clouds[1]), "--out", p(&zb)]), EXIT_OK);
    let (la, lb) = (read_latent(&za).unwrap(), read_latent(&zb).unwrap());
    assert_eq!(la, model.encode(&read_cloud(&clouds[0]).unwrap()).unwrap());

    let interp = dir.path().join("interp");
    let code = cli(&[
        "interpolate", "--ckpt", p(&ckpt), "--a", p(&za), "--b", p(&zb), "--steps", "3", "--out", p(&interp),
        "--passes", "2", "--seed", "8",
    ]);
    assert_eq!(code, EXIT_OK);
    let first = read_cloud(&interp.join("interp_000.ply")).unwrap();
    let last = read_cloud(&interp.join("interp_002.ply")).unwrap();
    assert!(interp.join("interp_001.ply").exists());
    assert!(!interp.join("interp_003.ply").exists());
    let same = |a: &PointCloud, b: &PointCloud| {
        a.len() == b.len() && a.points().iter().zip(b.points()).all(|(x, y)| (x - y).norm() < 1e-8)
    };
    assert!(same(&first, &model.sample_cloud(&la, 2, 8).unwrap()));
    assert!(same(&last, &model.sample_cloud(&lb, 2, 8).unwrap()));

    let dense = dir.path().join("dense.ply");
    let code = cli(&[
        "upsample", "--ckpt", p(&ckpt), "--in", p(&clouds[0]), "--passes", "6", "--seed", "1", "--out", p(&dense),
    ]);
    assert_eq!(code, EXIT_OK);
    let dense = read_cloud(&dense).unwrap();
    assert!(same(&dense, &model.sample_cloud(&la, 6, 1).unwrap()));
    assert!(point_to_mesh_distance(&dense, &read_mesh(&data.join("sphere_0000.ply")).unwrap()).is_ok());

    // Resuming continues from the saved parameters into a fresh directory.
    let resumed = dir.path().join("resumed");
    let code = cli(&[
        "train", "--config", p(&config), "--data", p(&data), "--out", p(&resumed), "--resume", p(&ckpt),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(resumed.join("epoch_2.nsck").exists());
}

#[test]
fn bad_config_key_is_data_error() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    assert_eq!(gen(&data, "2"), EXIT_OK);
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "epochs = 1\nlearnig_rate = 0.1\n").unwrap();
    let out = dir.path().join("run");
    assert_eq!(cli(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&out)]), EXIT_DATA);
}

#[test]
fn non_finite_parameters_are_numeric_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config();
    let mut model = Model::new(cfg.train.model.clone(), 0).unwrap();
    model.params_mut().get_mut(0).value.data_mut()[0] = f64::NAN;
    let ckpt = dir.path().join("nan.nsck");
    save_checkpoint(
        &ckpt,
        &gridsampler::io::Checkpoint {
            config: cfg.serialize(),
            params: model.params().clone(),
        },
    )
    .unwrap();
    let cloud = dir.path().join("c.xyz");
    fs::write(&cloud, "0.1 0.2 0.3\n-0.4 0.5 0.1\n").unwrap();
    let z = dir.path().join("z.latent");
    assert_eq!(cli(&["encode", "--ckpt", p(&ckpt), "--in", p(&cloud), "--out", p(&z)]), EXIT_NUMERIC);
    assert!(!z.exists());
}
