//! Optimization loop.
//!
//! A batch holds `batch_size / S_b` surfaces, each sampled `S_b` times under
//! one shared random rotation about the gravity axis. Every sampling yields an
//! input cloud and an independent target cloud. Seeds are derived from the
//! master seed and the (epoch, batch) position only.

mod dataset;
mod optimizer;

pub use dataset::{Dataset, ShapeRecord, MESH_RESOLUTION};
pub use optimizer::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::geometry::{rotate_gravity_axis, PointCloud};
use crate::grid::voxelize;
use crate::losses::{
    bce_occupancy, consistency_loss, expected_chamfer_term1, sampled_chamfer_term2, total_loss, LossTerms,
    LossWeights,
};
use crate::model::{Model, ModelConfig, SamplingCoordinates, Session};
use crate::rng::{derive, seeded};
use crate::tensor::Var;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub samplings_per_surface: usize,
    pub input_points: usize,
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    /// Published protocol (50 epochs, lr 0.001, 2048 points) on the desk
    /// network. The batch is 44 rather than 43 so that it splits into groups
    /// of four samplings.
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.001,
            batch_size: 44,
            samplings_per_surface: 4,
            input_points: 2048,
            model: ModelConfig::desk(),
            weights: LossWeights::default(),
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.samplings_per_surface == 0 || self.input_points == 0 {
            return Err(Error::Contract(
                "epochs, batch_size, samplings_per_surface and input_points must be positive".into(),
            ));
        }
        if !self.batch_size.is_multiple_of(self.samplings_per_surface) {
            return Err(Error::Contract(format!(
                "batch_size {} is not divisible by samplings_per_surface {}",
                self.batch_size, self.samplings_per_surface
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Contract(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        Ok(())
    }

    pub fn surfaces_per_batch(&self) -> usize {
        self.batch_size / self.samplings_per_surface
    }

    /// Seed of the initial parameters.
    pub fn init_seed(&self) -> u64 {
        derive(self.seed, &[u64::MAX])
    }
}

/// One element of a batch: network input, reconstruction target, and the
/// consistency group (index of the surface within the batch).
#[derive(Clone, Debug)]
pub struct BatchItem {
    pub input: PointCloud,
    pub target: PointCloud,
    pub group: usize,
    pub surface: usize,
}

/// Samples `S_b` (input, target) pairs for each listed surface.
pub fn build_batch(dataset: &Dataset, surfaces: &[usize], cfg: &TrainConfig, batch_seed: u64) -> Result<Vec<BatchItem>> {
    dataset.require_non_empty()?;
    let mut items = Vec::with_capacity(surfaces.len() * cfg.samplings_per_surface);
    for (group, &s) in surfaces.iter().enumerate() {
        let shape = dataset
            .shapes
            .get(s)
            .ok_or_else(|| Error::Contract(format!("surface {s} outside dataset of {}", dataset.len())))?;
        let mut rng = seeded(derive(batch_seed, &[group as u64]));
        let angle = dataset::random_angle(&mut rng);
        for _ in 0..cfg.samplings_per_surface {
            let input = shape.sampler().sample(cfg.input_points, &mut rng);
            let target = shape.sampler().sample(cfg.input_points, &mut rng);
            items.push(BatchItem {
                input: rotate_gravity_axis(&input, angle),
                target: rotate_gravity_axis(&target, angle),
                group,
                surface: s,
            });
        }
    }
    Ok(items)
}

/// Surface order of every batch in an epoch.
pub fn epoch_schedule(dataset_len: usize, cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..dataset_len).collect();
    order.shuffle(&mut seeded(derive(cfg.seed, &[epoch as u64, 0])));
    order.chunks(cfg.surfaces_per_batch()).map(<[usize]>::to_vec).collect()
}

fn batch_seed(cfg: &TrainConfig, epoch: usize, batch: usize) -> u64 {
    derive(cfg.seed, &[epoch as u64, 1, batch as u64])
}

/// Per-sample means of the loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub chamfer: f64,
    pub bce: f64,
    pub consistency: f64,
    pub total: f64,
}

impl std::ops::AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.chamfer += o.chamfer;
        self.bce += o.bce;
        self.consistency += o.consistency;
        self.total += o.total;
    }
}

impl LossBreakdown {
    fn scaled(self, s: f64) -> Self {
        LossBreakdown {
            chamfer: self.chamfer * s,
            bce: self.bce * s,
            consistency: self.consistency * s,
            total: self.total * s,
        }
    }
}

/// Records the full objective of a batch in `session` and returns the scalar
/// (averaged over batch elements) with its breakdown.
pub fn batch_loss(
    session: &mut Session<'_>,
    batch: &[BatchItem],
    weights: &LossWeights,
    seed: u64,
) -> Result<(Var, LossBreakdown)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let model = session.model();
    let grid = *model.grid();
    let n = grid.resolution();
    let mut latents = Vec::with_capacity(batch.len());
    for item in batch {
        latents.push(session.encode(&item.input)?);
    }
    let (mut t1s, mut t2s, mut bces) = (Vec::new(), Vec::new(), Vec::new());
    for (b, (item, &z)) in batch.iter().zip(&latents).enumerate() {
        let (occ, feat) = session.decode(z)?;
        let uv = SamplingCoordinates::random(n, &mut seeded(derive(seed, &[b as u64, 0])));
        let delta = session.sample_offsets(feat, &uv)?;
        let g = &mut session.graph;
        t1s.push(expected_chamfer_term1(g, occ, delta, &item.target, &grid)?);
        t2s.push(sampled_chamfer_term2(g, occ, delta, &item.target, &grid, derive(seed, &[b as u64, 1]))?);
        bces.push(bce_occupancy(g, occ, &voxelize(&item.target, &grid)?)?);
    }
    let g = &mut session.graph;
    let mut groups: Vec<Vec<Var>> = Vec::new();
    for (item, &z) in batch.iter().zip(&latents) {
        if groups.len() <= item.group {
            groups.resize(item.group + 1, Vec::new());
        }
        groups[item.group].push(z);
    }
    let mut cons = Vec::new();
    for group in groups.iter().filter(|g| g.len() >= 2) {
        cons.push(consistency_loss(g, group)?);
    }
    let terms = LossTerms {
        term1: g.add_all(&t1s)?,
        term2: g.add_all(&t2s)?,
        bce: g.add_all(&bces)?,
        consistency: if cons.is_empty() { None } else { Some(g.add_all(&cons)?) },
    };
    let inv = 1.0 / batch.len() as f64;
    let breakdown = LossBreakdown {
        chamfer: (g.value(terms.term1).item() + g.value(terms.term2).item()) * inv,
        bce: g.value(terms.bce).item() * inv,
        consistency: terms.consistency.map_or(0.0, |c| g.value(c).item()) * inv,
        total: 0.0,
    };
    for (name, v) in [
        ("chamfer", breakdown.chamfer),
        ("bce", breakdown.bce),
        ("consistency", breakdown.consistency),
    ] {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("{name} loss is not finite ({v})")));
        }
    }
    let total = total_loss(g, &terms, weights)?;
    let total = g.scale(total, inv);
    let breakdown = LossBreakdown {
        total: g.value(total).item(),
        ..breakdown
    };
    Ok((total, breakdown))
}

/// Epoch-averaged training losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub seconds: f64,
}

impl EpochReport {
    /// Learning-curve line: `epoch <k> chamfer <v> bce <v> consistency <v> total <v>`.
    pub fn log_line(&self) -> String {
        format!(
            "epoch {} chamfer {} bce {} consistency {} total {}",
            self.epoch, self.losses.chamfer, self.losses.bce, self.losses.consistency, self.losses.total
        )
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub curve: Vec<EpochReport>,
}

/// One optimizer update on `batch`.
pub fn train_step(
    model: &mut Model,
    optimizer: &mut Optimizer,
    batch: &[BatchItem],
    weights: &LossWeights,
    seed: u64,
) -> Result<LossBreakdown> {
    let mut session = model.session(true);
    let (loss, breakdown) = batch_loss(&mut session, batch, weights, seed)?;
    let grads = session.backward(loss)?;
    let params = model.params_mut();
    params.zero_grad();
    params.accumulate(&grads)?;
    optimizer.step(params)?;
    Ok(breakdown)
}

/// Trains from `init` (or a fresh network) for `cfg.epochs` epochs, calling
/// `on_epoch` after each one. Epoch numbers start at 1.
pub fn train<F>(dataset: &Dataset, cfg: &TrainConfig, init: Option<Model>, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochReport, &Model) -> Result<()>,
{
    cfg.validate()?;
    dataset.require_non_empty()?;
    let mut model = match init {
        Some(m) => {
            if m.config() != &cfg.model {
                return Err(Error::Contract("initial model does not match the configured architecture".into()));
            }
            m
        }
        None => Model::new(cfg.model.clone(), cfg.init_seed())?,
    };
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate)?;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut sum = LossBreakdown::default();
        let mut samples = 0usize;
        for (b, surfaces) in epoch_schedule(dataset.len(), cfg, epoch).iter().enumerate() {
            let seed = batch_seed(cfg, epoch, b);
            let batch = build_batch(dataset, surfaces, cfg, seed)?;
            let losses = train_step(&mut model, &mut optimizer, &batch, &cfg.weights, derive(seed, &[u64::MAX]))
                .map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("epoch {epoch} batch {b}: {m}")),
                    other => other,
                })?;
            sum += losses.scaled(batch.len() as f64);
            samples += batch.len();
        }
        let report = EpochReport {
            epoch,
            losses: sum.scaled(1.0 / samples as f64),
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{} ({:.1}s)", report.log_line(), report.seconds);
        on_epoch(&report, &model)?;
        curve.push(report);
    }
    Ok(TrainOutcome { model, curve })
}
