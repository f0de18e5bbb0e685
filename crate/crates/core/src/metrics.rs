//! Evaluation metrics: symmetric Chamfer, point-to-mesh distance and the
//! normalized uniformity coefficient (NUC).

use crate::error::{Error, Result};
use crate::geometry::{point_to_mesh_distance, DistanceStats, PointCloud, SurfaceSampler, TriangleMesh};
use crate::grid::voxelize;
use crate::losses::{mean_chamfer, BCE_EPS};
use crate::model::Model;
use crate::rng::{derive, seeded};
use crate::training::Dataset;

/// Disk count and area fractions of the uniformity measure.
#[derive(Clone, Debug, PartialEq)]
pub struct NucConfig {
    pub disk_count: usize,
    pub area_fractions: Vec<f64>,
    pub seed: u64,
}

impl Default for NucConfig {
    fn default() -> Self {
        NucConfig {
            disk_count: 9000,
            area_fractions: vec![0.002, 0.004, 0.006, 0.008, 0.010, 0.012],
            seed: 0,
        }
    }
}

impl NucConfig {
    pub fn validate(&self) -> Result<()> {
        if self.disk_count == 0 {
            return Err(Error::Contract("disk_count must be at least 1".into()));
        }
        if self.area_fractions.is_empty() {
            return Err(Error::Contract("at least one area fraction is required".into()));
        }
        if let Some(p) = self.area_fractions.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Contract(format!("area fraction {p} outside (0, 1)")));
        }
        Ok(())
    }
}

/// Uniformity at one area fraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NucResult {
    pub area_fraction: f64,
    pub avg: f64,
    pub nuc: f64,
}

/// `avg` and `NUC` from per-object disk counts and the per-object expected
/// count `p·N^k`.
pub fn nuc_from_counts(counts: &[Vec<usize>], expected: &[f64]) -> Result<(f64, f64)> {
    if counts.is_empty() || counts.len() != expected.len() {
        return Err(Error::Contract(format!(
            "{} count lists against {} expectations",
            counts.len(),
            expected.len()
        )));
    }
    let d = counts[0].len();
    if d == 0 || counts.iter().any(|c| c.len() != d) {
        return Err(Error::Contract("every object needs the same, non-zero number of disks".into()));
    }
    if let Some(e) = expected.iter().find(|e| e.is_nan() || **e <= 0.0) {
        return Err(Error::Contract(format!("expected count {e} must be positive")));
    }
    let total = (counts.len() * d) as f64;
    let ratios = || {
        counts
            .iter()
            .zip(expected)
            .flat_map(|(c, &e)| c.iter().map(move |&n| n as f64 / e))
    };
    let avg = ratios().sum::<f64>() / total;
    let var = ratios().map(|r| (r - avg) * (r - avg)).sum::<f64>() / total;
    Ok((avg, var.sqrt()))
}

/// Points of `cloud` inside the closed ball of each radius around `center`.
fn count_within(cloud: &PointCloud, center: &crate::geometry::Point, radii2: &[f64], out: &mut [usize]) {
    out.fill(0);
    for p in cloud.points() {
        let d = (p - center).norm_squared();
        for (o, r2) in out.iter_mut().zip(radii2) {
            if d <= *r2 {
                *o += 1;
            }
        }
    }
}

/// Disk counts of one object, `[fraction][disk]`.
pub fn disk_counts(cloud: &PointCloud, mesh: &TriangleMesh, cfg: &NucConfig, seed: u64) -> Result<Vec<Vec<usize>>> {
    cloud.require_non_empty("nuc")?;
    let area = mesh.area();
    let radii: Vec<f64> = cfg.area_fractions.iter().map(|p| (p * area / std::f64::consts::PI).sqrt()).collect();
    let diameter = mesh.bounding_diameter();
    for r in &radii {
        if *r > diameter {
            log::warn!("disk radius {r} exceeds the mesh bounding diameter {diameter}");
        }
    }
    let radii2: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let sampler = SurfaceSampler::new(mesh)?;
    let mut rng = seeded(seed);
    let mut counts = vec![Vec::with_capacity(cfg.disk_count); radii.len()];
    let mut buf = vec![0; radii.len()];
    for _ in 0..cfg.disk_count {
        let c = sampler.sample_point(&mut rng);
        count_within(cloud, &c, &radii2, &mut buf);
        for (list, &n) in counts.iter_mut().zip(&buf) {
            list.push(n);
        }
    }
    Ok(counts)
}

/// NUC of `clouds[k]` against `meshes[k]`, one result per area fraction.
/// Disks are Euclidean balls of radius `sqrt(p·A_k/π)` centered on
/// area-uniform surface samples.
pub fn nuc(clouds: &[PointCloud], meshes: &[TriangleMesh], cfg: &NucConfig) -> Result<Vec<NucResult>> {
    cfg.validate()?;
    if clouds.is_empty() || clouds.len() != meshes.len() {
        return Err(Error::Contract(format!(
            "{} clouds against {} meshes",
            clouds.len(),
            meshes.len()
        )));
    }
    let per_object: Vec<Vec<Vec<usize>>> = clouds
        .iter()
        .zip(meshes)
        .enumerate()
        .map(|(k, (c, m))| disk_counts(c, m, cfg, derive(cfg.seed, &[k as u64])))
        .collect::<Result<_>>()?;
    cfg.area_fractions
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let counts: Vec<Vec<usize>> = per_object.iter().map(|o| o[i].clone()).collect();
            let expected: Vec<f64> = clouds.iter().map(|c| p * c.len() as f64).collect();
            let (avg, nuc) = nuc_from_counts(&counts, &expected)?;
            Ok(NucResult { area_fraction: p, avg, nuc })
        })
        .collect()
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let s = DistanceStats::from_values(values);
        Summary { mean: s.mean, std: s.std }
    }
}

/// Reconstruction of one held-out shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeEval {
    pub name: String,
    pub generated_points: usize,
    pub expected_points: f64,
    pub bce_per_voxel: f64,
    /// `None` when the generated cloud was empty.
    pub chamfer: Option<f64>,
    pub distance: Option<DistanceStats>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructionConfig {
    pub input_points: usize,
    pub target_points: usize,
    pub passes: usize,
    pub seed: u64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            input_points: 2048,
            target_points: 2048,
            passes: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionReport {
    pub rows: Vec<ShapeEval>,
    pub chamfer: Summary,
    pub distance: Summary,
    pub bce_per_voxel: Summary,
    pub points: Summary,
    pub failures: usize,
}

fn bce_per_voxel(occupancy: &[f64], target: &[bool]) -> f64 {
    let total: f64 = occupancy
        .iter()
        .zip(target)
        .map(|(&o, &t)| {
            let o = o.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if t {
                -o.ln()
            } else {
                -(1.0 - o).ln()
            }
        })
        .sum();
    total / occupancy.len() as f64
}

/// Encodes a fresh sampling of every shape, generates `passes` realizations,
/// and compares them with an independent ground-truth sampling and the mesh.
pub fn eval_reconstruction(model: &Model, dataset: &Dataset, cfg: &ReconstructionConfig) -> Result<ReconstructionReport> {
    let mut rows = Vec::with_capacity(dataset.len());
    for (k, shape) in dataset.shapes.iter().enumerate() {
        let mut rng = seeded(derive(cfg.seed, &[k as u64]));
        let input = shape.sampler().sample(cfg.input_points, &mut rng);
        let truth = shape.sampler().sample(cfg.target_points, &mut rng);
        let z = model.encode(&input)?;
        let descriptor = model.decode(&z)?;
        let cloud = model.sample_descriptor(&descriptor, cfg.passes, derive(cfg.seed, &[k as u64, 1]))?;
        let target = voxelize(&truth, model.grid())?;
        let (chamfer, distance) = if cloud.is_empty() {
            (None, None)
        } else {
            (Some(mean_chamfer(&cloud, &truth)?), Some(point_to_mesh_distance(&cloud, &shape.mesh)?))
        };
        rows.push(ShapeEval {
            name: shape.name.clone(),
            generated_points: cloud.len(),
            expected_points: cfg.passes as f64 * descriptor.expected_count(),
            bce_per_voxel: bce_per_voxel(descriptor.occupancy.data(), target.cells()),
            chamfer,
            distance,
        });
    }
    Ok(summarize(rows))
}

pub fn summarize(rows: Vec<ShapeEval>) -> ReconstructionReport {
    let chamfers: Vec<f64> = rows.iter().filter_map(|r| r.chamfer).collect();
    let distances: Vec<f64> = rows.iter().filter_map(|r| r.distance.map(|d| d.mean)).collect();
    let bces: Vec<f64> = rows.iter().map(|r| r.bce_per_voxel).collect();
    let points: Vec<f64> = rows.iter().map(|r| r.generated_points as f64).collect();
    ReconstructionReport {
        failures: rows.len() - chamfers.len(),
        chamfer: Summary::of(&chamfers),
        distance: Summary::of(&distances),
        bce_per_voxel: Summary::of(&bces),
        points: Summary::of(&points),
        rows,
    }
}

/// How strongly latent codes depend on the sampling rather than the shape.
#[derive(Clone, Debug, PartialEq)]
pub struct DecouplingReport {
    /// Mean pairwise distance between codes of resamplings of one shape.
    pub intra: f64,
    /// Mean pairwise distance between codes of different shapes.
    pub inter: f64,
    pub ratio: f64,
    /// Fraction of resamplings whose nearest code (among the first sampling
    /// of every shape) belongs to the same shape.
    pub retrieval: f64,
    /// `(query shape, retrieved shape)` of every failed retrieval.
    pub misses: Vec<(usize, usize)>,
}

/// Encodes `samplings` independent clouds of every shape and compares the
/// spread of codes within and across shapes.
pub fn latent_decoupling(
    model: &Model,
    dataset: &Dataset,
    samplings: usize,
    points: usize,
    seed: u64,
) -> Result<DecouplingReport> {
    if samplings < 2 || dataset.len() < 2 {
        return Err(Error::Contract("decoupling needs two samplings of at least two shapes".into()));
    }
    let mut codes = Vec::with_capacity(dataset.len());
    for (k, shape) in dataset.shapes.iter().enumerate() {
        let mut rng = seeded(derive(seed, &[k as u64]));
        let zs = (0..samplings)
            .map(|_| model.encode(&shape.sampler().sample(points, &mut rng)))
            .collect::<Result<Vec<_>>>()?;
        codes.push(zs);
    }
    let (mut intra, mut n_intra) = (0.0, 0usize);
    for zs in &codes {
        for i in 0..zs.len() {
            for j in i + 1..zs.len() {
                intra += zs[i].distance(&zs[j]);
                n_intra += 1;
            }
        }
    }
    let (mut inter, mut n_inter) = (0.0, 0usize);
    for a in 0..codes.len() {
        for b in a + 1..codes.len() {
            inter += codes[a][0].distance(&codes[b][0]);
            n_inter += 1;
        }
    }
    let (intra, inter) = (intra / n_intra as f64, inter / n_inter as f64);
    let (mut hits, mut queries, mut misses) = (0usize, 0usize, Vec::new());
    for (k, zs) in codes.iter().enumerate() {
        for q in &zs[1..] {
            let best = codes
                .iter()
                .enumerate()
                .map(|(j, c)| (j, q.distance(&c[0])))
                .fold((usize::MAX, f64::INFINITY), |b, (j, d)| if d < b.1 { (j, d) } else { b });
            if best.0 == k {
                hits += 1;
            } else {
                misses.push((k, best.0));
            }
            queries += 1;
        }
    }
    Ok(DecouplingReport {
        intra,
        inter,
        ratio: intra / inter,
        retrieval: hits as f64 / queries as f64,
        misses,
    })
}
