//! Acceptance gate. Every criterion writes one `criterion N: PASS|FAIL` line
//! to stderr (bypassing test capture) and then asserts its outcome.
//!
//! Criteria 6, 7, 8 and 10 share one desk-scale training run.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use gridsampler::geometry::{rigid_transform, sample_surface, Point, PointCloud, ShapeFamily, SurfaceSampler};
use gridsampler::grid::{realize_points, sample_topology, topology_probability, GridSpec, OffsetField, Topology};
use gridsampler::io::{read_checkpoint, write_checkpoint, Checkpoint, RunConfig};
use gridsampler::losses::{
    bce_occupancy, consistency_loss, draw_nonempty_topology, expected_chamfer_term1, sampled_chamfer_term2,
    total_loss, LossTerms, LossWeights,
};
use gridsampler::metrics::{eval_reconstruction, latent_decoupling, nuc, nuc_from_counts, NucConfig, ReconstructionConfig};
use gridsampler::model::{sample_passes, Model, ModelConfig, ParamGroup, SamplingCoordinates};
use gridsampler::rng::{derive, seeded};
use gridsampler::tensor::gradcheck::{check_gradients, worst};
use gridsampler::tensor::{Graph, Tensor, Var};
use gridsampler::training::{batch_loss, build_batch, train, Dataset, TrainConfig, MESH_RESOLUTION};
use nalgebra::{Rotation3, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn verdict(n: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n}: {status} {detail}");
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Contracts an arbitrary output with fixed random weights so every output
/// entry contributes a distinct amount to the checked scalar.
fn project(g: &mut Graph, out: Var, seed: u64) -> gridsampler::Result<Var> {
    let mut rng = seeded(seed);
    let shape = g.shape(out).to_vec();
    let w = g.constant(random_tensor(&mut rng, &shape, -1.0, 1.0));
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

// ---------------------------------------------------------------- criterion 1

fn op_checks() -> Vec<(&'static str, f64)> {
    let mut rng = seeded(101);
    let mut out = Vec::new();
    let mut run = |name: &'static str, inputs: Vec<Tensor>, f: &dyn Fn(&mut Graph, &[Var]) -> gridsampler::Result<Var>| {
        let r = check_gradients(&inputs, FD_STEP, |g, v| {
            let y = f(g, v)?;
            if g.value(y).len() == 1 {
                Ok(y)
            } else {
                project(g, y, 7)
            }
        })
        .expect(name);
        out.push((name, worst(&r)));
    };
    run(
        "linear",
        vec![
            random_tensor(&mut rng, &[2, 5, 4], -1.0, 1.0),
            random_tensor(&mut rng, &[4, 3], -1.0, 1.0),
            random_tensor(&mut rng, &[3], -1.0, 1.0),
        ],
        &|g, v| g.linear(v[0], v[1], Some(v[2])),
    );
    run(
        "conv3d k3 s1 p1",
        vec![
            random_tensor(&mut rng, &[2, 2, 4, 4, 4], -1.0, 1.0),
            random_tensor(&mut rng, &[3, 2, 3, 3, 3], -1.0, 1.0),
        ],
        &|g, v| g.conv3d(v[0], v[1], 1, 1),
    );
    run(
        "conv3d k2 s2",
        vec![
            random_tensor(&mut rng, &[1, 3, 4, 4, 4], -1.0, 1.0),
            random_tensor(&mut rng, &[2, 3, 2, 2, 2], -1.0, 1.0),
        ],
        &|g, v| g.conv3d(v[0], v[1], 2, 0),
    );
    run(
        "conv3d_transposed k2 s2",
        vec![
            random_tensor(&mut rng, &[2, 2, 2, 2, 2], -1.0, 1.0),
            random_tensor(&mut rng, &[2, 3, 2, 2, 2], -1.0, 1.0),
        ],
        &|g, v| g.conv3d_transposed(v[0], v[1], 2, 0),
    );
    run(
        "conv3d_transposed k3 s1 p1",
        vec![
            random_tensor(&mut rng, &[1, 2, 3, 3, 3], -1.0, 1.0),
            random_tensor(&mut rng, &[2, 2, 3, 3, 3], -1.0, 1.0),
        ],
        &|g, v| g.conv3d_transposed(v[0], v[1], 1, 1),
    );
    run(
        "channel_bias",
        vec![random_tensor(&mut rng, &[2, 3, 2, 2, 2], -1.0, 1.0), random_tensor(&mut rng, &[3], -1.0, 1.0)],
        &|g, v| g.channel_bias(v[0], v[1]),
    );
    // Keep ReLU inputs away from the kink.
    let mut relu_in = random_tensor(&mut rng, &[30], 0.05, 1.0);
    for (i, x) in relu_in.data_mut().iter_mut().enumerate() {
        if i % 2 == 0 {
            *x = -*x;
        }
    }
    run("relu", vec![relu_in], &|g, v| Ok(g.relu(v[0])));
    run("sigmoid", vec![random_tensor(&mut rng, &[20], -4.0, 4.0)], &|g, v| Ok(g.sigmoid(v[0])));
    run("tanh", vec![random_tensor(&mut rng, &[20], -3.0, 3.0)], &|g, v| Ok(g.tanh(v[0])));
    run("scale", vec![random_tensor(&mut rng, &[6], -1.0, 1.0)], &|g, v| Ok(g.scale(v[0], -0.7)));
    let pair = |rng: &mut gridsampler::rng::Rng| vec![random_tensor(rng, &[3, 4], -1.0, 1.0), random_tensor(rng, &[3, 4], -1.0, 1.0)];
    run("add", pair(&mut rng), &|g, v| g.add(v[0], v[1]));
    run("sub", pair(&mut rng), &|g, v| g.sub(v[0], v[1]));
    run("mul", pair(&mut rng), &|g, v| g.mul(v[0], v[1]));
    run("sum", vec![random_tensor(&mut rng, &[7], -1.0, 1.0)], &|g, v| Ok(g.sum(v[0])));
    run("reshape", vec![random_tensor(&mut rng, &[2, 6], -1.0, 1.0)], &|g, v| g.reshape(v[0], &[3, 4]));
    run(
        "concat",
        vec![random_tensor(&mut rng, &[1, 2, 2, 2, 2], -1.0, 1.0), random_tensor(&mut rng, &[1, 3, 2, 2, 2], -1.0, 1.0)],
        &|g, v| g.concat(&[v[0], v[1]], 1),
    );
    let cells: Vec<usize> = (0..12).map(|_| rng.gen_range(0..5)).collect();
    run("grid_max_pool", vec![random_tensor(&mut rng, &[12, 3], -1.0, 1.0)], &move |g, v| {
        g.grid_max_pool(v[0], &cells, 6)
    });
    let targets: Vec<bool> = (0..10).map(|_| rng.gen_bool(0.5)).collect();
    run("bce", vec![random_tensor(&mut rng, &[10], 0.05, 0.95)], &move |g, v| g.bce(v[0], &targets, 1e-7));
    out
}

fn loss_checks() -> Vec<(&'static str, f64)> {
    let mut rng = seeded(202);
    let grid = GridSpec::unit_cube(3).unwrap();
    let occ = random_tensor(&mut rng, &[1, 3, 3, 3], 0.1, 0.9);
    let delta = random_tensor(&mut rng, &[3, 3, 3, 3], -0.45, 0.45);
    let y = PointCloud::new((0..15).map(|_| Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).unwrap();
    let topo = Topology::new(3, (0..27).map(|_| rng.gen_bool(0.4)).collect()).unwrap();
    let mut out = Vec::new();
    let r = check_gradients(&[occ.clone(), delta.clone()], FD_STEP, |g, v| expected_chamfer_term1(g, v[0], v[1], &y, &grid)).unwrap();
    out.push(("expected_chamfer_term1", worst(&r)));
    let occ_c = occ.clone();
    let r = check_gradients(std::slice::from_ref(&delta), FD_STEP, |g, v| {
        let o = g.constant(occ_c.clone());
        sampled_chamfer_term2(g, o, v[0], &y, &grid, 99)
    })
    .unwrap();
    out.push(("sampled_chamfer_term2", worst(&r)));
    let r = check_gradients(std::slice::from_ref(&occ), FD_STEP, |g, v| bce_occupancy(g, v[0], &topo)).unwrap();
    out.push(("bce_occupancy", worst(&r)));
    let zs: Vec<Tensor> = (0..3).map(|_| random_tensor(&mut rng, &[5], -1.0, 1.0)).collect();
    let r = check_gradients(&zs, FD_STEP, consistency_loss).unwrap();
    out.push(("consistency_loss", worst(&r)));
    let mut inputs = vec![occ, delta];
    inputs.extend(zs);
    let r = check_gradients(&inputs, FD_STEP, |g, v| {
        let terms = LossTerms {
            term1: expected_chamfer_term1(g, v[0], v[1], &y, &grid)?,
            term2: sampled_chamfer_term2(g, v[0], v[1], &y, &grid, 5)?,
            bce: bce_occupancy(g, v[0], &topo)?,
            consistency: Some(consistency_loss(g, &v[2..])?),
        };
        total_loss(g, &terms, &LossWeights { chamfer: 0.7, bce: 1.3, consistency: 0.4 })
    })
    .unwrap();
    out.push(("total_loss", worst(&r)));
    out
}

/// Full objective of a tiny network against central differences on a
/// random subset of parameter entries, with all randomness seed-frozen.
fn model_check() -> f64 {
    let cfg = TrainConfig {
        batch_size: 4,
        samplings_per_surface: 2,
        input_points: 120,
        model: ModelConfig {
            resolution: 4,
            point_widths: vec![6, 4],
            fine_blocks: 1,
            coarse_blocks: 1,
            latent_dim: 8,
            feature_channels: 3,
            sampler_hidden: 5,
        },
        ..Default::default()
    };
    let data = Dataset::procedural(&[ShapeFamily::Sphere, ShapeFamily::Box], 1, 12, 3).unwrap();
    let batch = build_batch(&data, &[0, 1], &cfg, 11).unwrap();
    let mut model = Model::new(cfg.model.clone(), 5).unwrap();
    // Biases start at zero, which puts whole rows of ReLU inputs exactly on
    // the kink; move to a generic point of parameter space first.
    let mut jitter = seeded(6);
    for p in model.params_mut().iter_mut().filter(|p| p.name.ends_with("bias")) {
        for v in p.value.data_mut() {
            *v = jitter.gen_range(-0.1..0.1);
        }
    }
    let loss_of = |m: &Model| {
        let mut s = m.session(false);
        let (l, _) = batch_loss(&mut s, &batch, &cfg.weights, 17).unwrap();
        s.graph.value(l).item()
    };
    let mut s = model.session(true);
    let (l, _) = batch_loss(&mut s, &batch, &cfg.weights, 17).unwrap();
    let grads = s.backward(l).unwrap();
    let mut rng = seeded(9);
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for (p, g) in &grads {
        let n = g.len();
        let mut picks: Vec<usize> = (0..n).collect();
        picks.shuffle(&mut rng);
        for &j in picks.iter().take(12) {
            let orig = model.params().get(*p).value.data()[j];
            model.params_mut().get_mut(*p).value.data_mut()[j] = orig + FD_STEP;
            let plus = loss_of(&model);
            model.params_mut().get_mut(*p).value.data_mut()[j] = orig - FD_STEP;
            let minus = loss_of(&model);
            model.params_mut().get_mut(*p).value.data_mut()[j] = orig;
            analytic.push(g[j]);
            numeric.push((plus - minus) / (2.0 * FD_STEP));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric))
}

#[test]
fn criterion_01_gradients() {
    let start = Instant::now();
    let mut results = op_checks();
    results.extend(loss_checks());
    results.push(("model end-to-end", model_check()));
    let secs = start.elapsed().as_secs_f64();
    let bad: Vec<_> = results.iter().filter(|(_, e)| e.is_nan() || *e >= FD_TOL).collect();
    let max = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let pass = bad.is_empty() && secs < 120.0;
    verdict(1, pass, &format!("{} checks, worst relative error {max:.2e}, {secs:.1}s; failing: {bad:?}", results.len()));
    assert!(pass);
}

// ------------------------------------------------------------- criteria 2, 3

struct Instance {
    grid: GridSpec,
    occ: Vec<f64>,
    delta: Vec<f64>,
    y: PointCloud,
}

fn instance(seed: u64, occ_range: (f64, f64)) -> Instance {
    let mut rng = seeded(seed);
    let grid = GridSpec::unit_cube(2).unwrap();
    let n_y = rng.gen_range(1..12);
    Instance {
        grid,
        occ: (0..8).map(|_| rng.gen_range(occ_range.0..occ_range.1)).collect(),
        delta: (0..24).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        y: PointCloud::new(
            (0..n_y)
                .map(|_| Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap(),
    }
}

fn nn_sum(from: &[Point], to: &[Point]) -> f64 {
    from.iter()
        .map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
        .sum()
}

/// `(P(T), X(T))` for all 256 topologies of a 2×2×2 grid.
fn enumerate(inst: &Instance) -> Vec<(f64, Vec<Point>)> {
    let field = OffsetField::new(2, inst.delta.clone()).unwrap();
    (0u32..256)
        .map(|mask| {
            let t = Topology::new(2, (0..8).map(|k| mask >> k & 1 == 1).collect()).unwrap();
            let p = topology_probability(&inst.occ, &t).unwrap().probability;
            (p, realize_points(&t, &field, &inst.grid).unwrap().into_points())
        })
        .collect()
}

fn vars(g: &mut Graph, inst: &Instance) -> (Var, Var) {
    let o = g.constant(Tensor::new(vec![1, 2, 2, 2], inst.occ.clone()).unwrap());
    let d = g.constant(Tensor::new(vec![3, 2, 2, 2], inst.delta.clone()).unwrap());
    (o, d)
}

#[test]
fn criterion_02_exact_expectation() {
    let mut worst_err: f64 = 0.0;
    for s in 0..20 {
        let inst = instance(1000 + s, (0.0, 1.0));
        let oracle: f64 = enumerate(&inst)
            .iter()
            .map(|(p, x)| if x.is_empty() { 0.0 } else { p * nn_sum(x, inst.y.points()) })
            .sum();
        let mut g = Graph::new();
        let (o, d) = vars(&mut g, &inst);
        let t1 = expected_chamfer_term1(&mut g, o, d, &inst.y, &inst.grid).unwrap();
        worst_err = worst_err.max((g.value(t1).item() - oracle).abs());
    }
    let pass = worst_err <= 1e-10;
    verdict(2, pass, &format!("20 instances, max |term1 - enumeration| = {worst_err:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_03_monte_carlo() {
    const DRAWS: usize = 10_000;
    let mut lines = Vec::new();
    let mut pass = true;
    for s in 0..3 {
        let inst = instance(2000 + s, (0.3, 0.95));
        let table = enumerate(&inst);
        let p_empty = table[0].0;
        let cond: f64 = table[1..].iter().map(|(p, x)| p * nn_sum(inst.y.points(), x)).sum::<f64>() / (1.0 - p_empty);
        let mut values = Vec::with_capacity(DRAWS);
        for seed in 0..DRAWS as u64 {
            let mut g = Graph::new();
            let (o, d) = vars(&mut g, &inst);
            let t2 = sampled_chamfer_term2(&mut g, o, d, &inst.y, &inst.grid, derive(77, &[s, seed])).unwrap();
            values.push(g.value(t2).item());
        }
        let mean = values.iter().sum::<f64>() / DRAWS as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (DRAWS - 1) as f64;
        let se = (var / DRAWS as f64).sqrt();
        let z = (mean - cond).abs() / se;
        pass &= z <= 3.0;
        lines.push(format!("mean {mean:.6} vs {cond:.6} ({z:.2} se, P(empty) {p_empty:.1e})"));
    }
    // The redraw keeps the estimator conditional on a non-empty topology
    // except with probability P(empty)^2, where the forced voxel is used.
    let inst = instance(2100, (0.0, 1e-3));
    let t = draw_nonempty_topology(&inst.occ, 2, 0).unwrap();
    pass &= t.count() >= 1;
    verdict(3, pass, &lines.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_probability_laws() {
    let mut rng = seeded(404);
    let mut sum_err: f64 = 0.0;
    for _ in 0..10 {
        let occ: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = (0u32..256)
            .map(|mask| {
                let t = Topology::new(2, (0..8).map(|k| mask >> k & 1 == 1).collect()).unwrap();
                topology_probability(&occ, &t).unwrap().probability
            })
            .sum();
        sum_err = sum_err.max((total - 1.0).abs());
    }
    let sum_ok = sum_err <= 1e-12;

    const DRAWS: usize = 10_000;
    let occ: Vec<f64> = (0..27).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut hits = vec![0usize; 27];
    let mut draw_rng = seeded(405);
    for _ in 0..DRAWS {
        let t = sample_topology(&occ, 3, &mut draw_rng).unwrap();
        for (h, &c) in hits.iter_mut().zip(t.cells()) {
            *h += usize::from(c);
        }
    }
    let max_z = occ
        .iter()
        .zip(&hits)
        .map(|(&o, &h)| {
            let sd = (DRAWS as f64 * o * (1.0 - o)).sqrt();
            (h as f64 - DRAWS as f64 * o).abs() / sd
        })
        .fold(0.0, f64::max);
    let freq_ok = max_z <= 3.0;

    let model = Model::new(ModelConfig::desk(), 4).unwrap();
    let cloud = sample_surface(
        &gridsampler::geometry::procedural_shape(&gridsampler::geometry::ShapeParams::sphere(0.8), 24).unwrap(),
        2048,
        1,
    )
    .unwrap();
    let z = model.encode(&cloud).unwrap();
    let descriptor = model.decode(&z).unwrap();
    let o = descriptor.occupancy.data();
    let expected = 10.0 * o.iter().sum::<f64>();
    let sigma = (10.0 * o.iter().map(|p| p * (1.0 - p)).sum::<f64>()).sqrt();
    let reps = 50;
    let counts: Vec<f64> = (0..reps)
        .map(|r| model.sample_cloud(&z, 10, r).unwrap().len() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / reps as f64;
    let single_ok = (counts[0] - expected).abs() <= 3.0 * sigma;
    let mean_ok = (mean - expected).abs() <= 3.0 * sigma / (reps as f64).sqrt();

    let pass = sum_ok && freq_ok && single_ok && mean_ok;
    verdict(
        4,
        pass,
        &format!(
            "sum err {sum_err:.1e}; max voxel z {max_z:.2}; 10-pass count {} / mean {mean:.1} vs {expected:.1} (sigma {sigma:.2})",
            counts[0]
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_05_encoder_invariance() {
    let model = Model::new(ModelConfig::desk(), 55).unwrap();
    let data = Dataset::procedural(&ShapeFamily::ALL, 17, 16, 5).unwrap();
    let mut rng = seeded(505);
    let mut failures = 0;
    for i in 0..50 {
        let shape = &data.shapes[i % data.len()];
        let count = rng.gen_range(10..1500);
        let cloud = shape.sampler().sample(count, &mut rng);
        let z = model.encode(&cloud).unwrap();
        let mut shuffled = cloud.points().to_vec();
        shuffled.shuffle(&mut rng);
        let zp = model.encode(&PointCloud::new(shuffled).unwrap()).unwrap();
        let doubled: PointCloud = cloud.points().iter().flat_map(|p| [*p, *p]).collect();
        let zd = model.encode(&doubled).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if bits(z.values()) != bits(zp.values()) || bits(z.values()) != bits(zd.values()) {
            failures += 1;
        }
    }
    let pass = failures == 0;
    verdict(5, pass, &format!("50 clouds, {failures} with differing bits under permutation or duplication"));
    assert!(pass);
}

// ------------------------------------------------------- shared desk-scale run

pub const DESK_EPOCHS: usize = 15;

fn desk_config() -> TrainConfig {
    let mut cfg = TrainConfig {
        epochs: DESK_EPOCHS,
        batch_size: 16,
        samplings_per_surface: 4,
        input_points: 2048,
        seed: 2024,
        ..Default::default()
    };
    cfg.model = ModelConfig::desk();
    cfg.weights.consistency = 1.0;
    cfg
}

struct DeskRun {
    cfg: TrainConfig,
    model: Model,
    test: Dataset,
    checkpoint: Vec<u8>,
    seconds: f64,
}

fn run_desk(cfg: &TrainConfig) -> (Model, Dataset, Vec<u8>, f64) {
    let data = Dataset::procedural(&ShapeFamily::ALL, 100, MESH_RESOLUTION, 7).unwrap();
    let (train_set, test_set) = data.split_holdout(10);
    let start = Instant::now();
    let outcome = train(&train_set, cfg, None, |r, _| {
        let _ = writeln!(std::io::stderr().lock(), "  desk run: {}", r.log_line());
        Ok(())
    })
    .unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let ck = Checkpoint {
        config: RunConfig {
            train: cfg.clone(),
            nuc: NucConfig::default(),
        }
        .serialize(),
        params: outcome.model.params().clone(),
    };
    (outcome.model, test_set, write_checkpoint(&ck), seconds)
}

fn desk() -> &'static DeskRun {
    static RUN: OnceLock<DeskRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = desk_config();
        let (model, test, checkpoint, seconds) = run_desk(&cfg);
        DeskRun {
            cfg,
            model,
            test,
            checkpoint,
            seconds,
        }
    })
}

#[test]
fn criterion_06_desk_training() {
    let run = desk();
    let report = eval_reconstruction(&run.model, &run.test, &ReconstructionConfig { seed: 6, ..Default::default() }).unwrap();
    let pass = report.chamfer.mean < 0.08
        && report.bce_per_voxel.mean < 0.15
        && report.failures == 0
        && run.seconds < 1800.0
        && run.cfg.epochs <= 50;
    verdict(
        6,
        pass,
        &format!(
            "held-out chamfer {:.4} (< 0.08), bce/voxel {:.4} (< 0.15), {} epochs in {:.0}s, {} empty outputs",
            report.chamfer.mean, report.bce_per_voxel.mean, run.cfg.epochs, run.seconds, report.failures
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_decoupling() {
    let run = desk();
    let d = latent_decoupling(&run.model, &run.test, 4, 2048, 70).unwrap();
    let pass = d.ratio < 0.2 && d.retrieval >= 0.95;
    verdict(
        7,
        pass,
        &format!(
            "intra/inter {:.4} (< 0.2), 1-NN retrieval {:.3} (>= 0.95), misses {:?}",
            d.ratio, d.retrieval, d.misses
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_upsampling() {
    let run = desk();
    let model = &run.model;
    let mut offsets_ok = true;
    let (mut count, mut expected, mut var) = (0.0, 0.0, 0.0);
    let mut dist = [Vec::new(), Vec::new()];
    for (k, shape) in run.test.shapes.iter().enumerate() {
        for (slot, points) in [(0, 2048), (1, 256)] {
            let input = shape.sampler().sample(points, &mut seeded(derive(80, &[k as u64, points as u64])));
            let descriptor = model.decode(&model.encode(&input).unwrap()).unwrap();
            let mut rng = seeded(derive(81, &[k as u64, points as u64]));
            let cloud = sample_passes(descriptor.occupancy.data(), model.grid(), 8, &mut rng, |uv: &SamplingCoordinates| {
                let d = model.sample_offsets(&descriptor, uv)?;
                offsets_ok &= d.in_range();
                Ok(d)
            })
            .unwrap();
            if slot == 1 {
                let o = descriptor.occupancy.data();
                count += cloud.len() as f64;
                expected += 8.0 * o.iter().sum::<f64>();
                var += 8.0 * o.iter().map(|p| p * (1.0 - p)).sum::<f64>();
            }
            dist[slot].push(gridsampler::geometry::point_to_mesh_distance(&cloud, &shape.mesh).unwrap().mean);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (d2048, d256) = (mean(&dist[0]), mean(&dist[1]));
    let count_ok = (count - expected).abs() <= 3.0 * var.sqrt();
    let pass = d256 <= 1.5 * d2048 && count_ok && offsets_ok;
    verdict(
        8,
        pass,
        &format!(
            "distance 256-in {d256:.4} vs 2048-in {d2048:.4} (ratio {:.3} <= 1.5); count {count} vs {expected:.1} (sigma {:.1}); offsets in range {offsets_ok}",
            d256 / d2048,
            var.sqrt()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_09_metric_fidelity() {
    let (avg_u, nuc_u) = nuc_from_counts(&[vec![12; 40], vec![30; 40]], &[12.0, 30.0]).unwrap();
    let (avg_h, nuc_h) = nuc_from_counts(&[vec![5, 15]], &[10.0]).unwrap();

    let mesh = gridsampler::geometry::procedural_shape(
        &gridsampler::geometry::ShapeParams::Torus { major: 1.0, minor: 0.35, height: 0.3 },
        32,
    )
    .unwrap();
    let cloud = SurfaceSampler::new(&mesh).unwrap().sample(3000, &mut seeded(9));
    let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
    let shift = Vector3::new(0.4, -2.0, 7.5);
    let moved_mesh = mesh.transform(&rot, &shift);
    let moved_cloud = cloud.map(|p| rigid_transform(p, &rot, &shift));
    let cfg = NucConfig::default();
    let a = nuc(&[cloud], &[mesh], &cfg).unwrap();
    let b = nuc(&[moved_cloud], &[moved_mesh], &cfg).unwrap();
    let rigid = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x.nuc - y.nuc).abs().max((x.avg - y.avg).abs()))
        .fold(0.0, f64::max);
    let pass = avg_u == 1.0 && nuc_u == 0.0 && avg_h == 1.0 && nuc_h == 0.5 && rigid <= 1e-9;
    verdict(
        9,
        pass,
        &format!("uniform ({avg_u}, {nuc_u}); hand case ({avg_h}, {nuc_h}); rigid-motion difference {rigid:.1e}"),
    );
    assert!(pass);
}

// --------------------------------------------------------------- criterion 10

#[test]
fn criterion_10_reproducibility() {
    let run = desk();
    let (_, _, second, _) = run_desk(&run.cfg);
    let identical = second == run.checkpoint;
    let back = read_checkpoint(&run.checkpoint).unwrap();
    let same_values = back
        .params
        .iter()
        .zip(run.model.params().iter())
        .all(|(a, b)| a.name == b.name && a.value == b.value);
    let round_trip = write_checkpoint(&back) == run.checkpoint && same_values && back.params.len() == run.model.params().len();
    let pass = identical && round_trip;
    verdict(
        10,
        pass,
        &format!(
            "two runs bit-identical {identical} ({} bytes); checkpoint round trip exact {round_trip}",
            run.checkpoint.len()
        ),
    );
    assert!(pass);
}

// --------------------------------------------------------------- criterion 11

#[test]
fn criterion_11_parameter_report() {
    let reference = Model::new(ModelConfig::reference(), 0).unwrap();
    let desk = Model::new(ModelConfig::desk(), 0).unwrap();
    let dec = reference.parameter_count(ParamGroup::DecoderTotal);
    verdict(
        11,
        true,
        &format!(
            "decoder_total at reference config {dec} (published figure 4.63e5); desk config {}; informational",
            desk.parameter_count(ParamGroup::DecoderTotal)
        ),
    );
}
