//! Encoder, decoder and stochastic sampling layer.

mod config;
mod params;

pub use config::ModelConfig;
pub use params::{ModelParams, Param, ParamGroup, SubNetwork, PARAMS_VERSION};

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::grid::{
    realize_points, sample_topology, voxel_indices, GridSpec, OffsetField, SurfaceDescriptor,
};
use crate::rng::{seeded, Rng as StreamRng};
use crate::tensor::{Graph, Tensor, Var};

/// Fixed-length shape code produced by the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// `(1 - w)·self + w·other`.
    pub fn lerp(&self, other: &LatentCode, w: f64) -> Result<LatentCode> {
        if self.dim() != other.dim() {
            return Err(Error::Contract(format!(
                "latent dimensions {} and {} differ",
                self.dim(),
                other.dim()
            )));
        }
        Ok(LatentCode(
            self.0.iter().zip(&other.0).map(|(a, b)| (1.0 - w) * a + w * b).collect(),
        ))
    }

    pub fn distance(&self, other: &LatentCode) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

/// Per-voxel uniform noise `(u, v)`, stored `[2, N³]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingCoordinates {
    resolution: usize,
    data: Vec<f64>,
}

impl SamplingCoordinates {
    pub fn new(resolution: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 2 * resolution.pow(3) {
            return Err(Error::Dimension(format!(
                "sampling coordinates for resolution {resolution} need {} values, got {}",
                2 * resolution.pow(3),
                data.len()
            )));
        }
        if let Some(x) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Contract(format!("sampling coordinate {x} outside [0, 1]")));
        }
        Ok(SamplingCoordinates { resolution, data })
    }

    pub fn random<R: Rng + ?Sized>(resolution: usize, rng: &mut R) -> Self {
        SamplingCoordinates {
            resolution,
            data: (0..2 * resolution.pow(3)).map(|_| rng.gen()).collect(),
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }
}

#[derive(Clone, Copy, Debug)]
struct Affine {
    weight: usize,
    bias: usize,
}

#[derive(Clone, Copy, Debug)]
struct ResBlock {
    first: Affine,
    second: Affine,
}

/// Parameter indices of every layer, resolved once from the names.
#[derive(Clone, Debug)]
struct Layout {
    point: Vec<Affine>,
    enc_fine: Vec<ResBlock>,
    down: Affine,
    enc_coarse: Vec<ResBlock>,
    to_latent: Affine,
    from_latent: Affine,
    dec_coarse: Vec<ResBlock>,
    up: Affine,
    dec_fine: Vec<ResBlock>,
    occupancy: Affine,
    features: Affine,
    sampler_hidden: Affine,
    sampler_out: Affine,
}

impl Layout {
    fn resolve(cfg: &ModelConfig, p: &ModelParams) -> Result<Self> {
        let aff = |name: &str| -> Result<Affine> {
            Ok(Affine {
                weight: p.index_of(&format!("{name}.weight"))?,
                bias: p.index_of(&format!("{name}.bias"))?,
            })
        };
        let blocks = |prefix: &str, n: usize| -> Result<Vec<ResBlock>> {
            (0..n)
                .map(|i| {
                    Ok(ResBlock {
                        first: aff(&format!("{prefix}.{i}.conv1"))?,
                        second: aff(&format!("{prefix}.{i}.conv2"))?,
                    })
                })
                .collect()
        };
        Ok(Layout {
            point: (0..cfg.point_widths.len())
                .map(|i| aff(&format!("encoder.point.{i}")))
                .collect::<Result<_>>()?,
            enc_fine: blocks("encoder.fine", cfg.fine_blocks)?,
            down: aff("encoder.down")?,
            enc_coarse: blocks("encoder.coarse", cfg.coarse_blocks)?,
            to_latent: aff("encoder.latent")?,
            from_latent: aff("decoder.latent")?,
            dec_coarse: blocks("decoder.coarse", cfg.coarse_blocks)?,
            up: aff("decoder.up")?,
            dec_fine: blocks("decoder.fine", cfg.fine_blocks)?,
            occupancy: aff("decoder.occupancy")?,
            features: aff("decoder.features")?,
            sampler_hidden: aff("sampler.hidden")?,
            sampler_out: aff("sampler.offset")?,
        })
    }
}

type ConvInit<'a> = dyn FnMut(&mut ModelParams, &str, [usize; 5], usize, f64) -> Result<()> + 'a;

fn build_params(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut rng = seeded(seed);
    let mut p = ModelParams::new();
    let c = cfg.channels();
    let coarse_cells = cfg.coarse_resolution().pow(3);
    let mut dense = |p: &mut ModelParams, name: &str, fan_in: usize, fan_out: usize, gain: f64| -> Result<()> {
        p.insert_uniform(&format!("{name}.weight"), &[fan_in, fan_out], fan_in, gain, &mut rng)?;
        p.insert(&format!("{name}.bias"), Tensor::zeros(&[fan_out]))?;
        Ok(())
    };
    let mut fan_in = 3;
    for (i, &w) in cfg.point_widths.iter().enumerate() {
        dense(&mut p, &format!("encoder.point.{i}"), fan_in, w, 2.0)?;
        fan_in = w;
    }
    // Volumetric kernels are drawn from a second stream so that changing the
    // point-layer widths does not reshuffle them.
    let mut rng = seeded(crate::rng::derive(seed, &[1]));
    let mut conv = |p: &mut ModelParams, name: &str, shape: [usize; 5], fan_in: usize, gain: f64| -> Result<()> {
        p.insert_uniform(&format!("{name}.weight"), &shape, fan_in, gain, &mut rng)?;
        let out = if name.ends_with("up") { shape[1] } else { shape[0] };
        p.insert(&format!("{name}.bias"), Tensor::zeros(&[out]))?;
        Ok(())
    };
    let block = |p: &mut ModelParams, conv: &mut ConvInit, prefix: &str, n: usize| -> Result<()> {
        for i in 0..n {
            conv(p, &format!("{prefix}.{i}.conv1"), [c, c, 3, 3, 3], 27 * c, 2.0)?;
            conv(p, &format!("{prefix}.{i}.conv2"), [c, c, 3, 3, 3], 27 * c, 1.0)?;
        }
        Ok(())
    };
    block(&mut p, &mut conv, "encoder.fine", cfg.fine_blocks)?;
    conv(&mut p, "encoder.down", [c, c, 2, 2, 2], 8 * c, 2.0)?;
    block(&mut p, &mut conv, "encoder.coarse", cfg.coarse_blocks)?;
    let mut rng = seeded(crate::rng::derive(seed, &[2]));
    let mut dense = |p: &mut ModelParams, name: &str, fan_in: usize, fan_out: usize, gain: f64| -> Result<()> {
        p.insert_uniform(&format!("{name}.weight"), &[fan_in, fan_out], fan_in, gain, &mut rng)?;
        p.insert(&format!("{name}.bias"), Tensor::zeros(&[fan_out]))?;
        Ok(())
    };
    dense(&mut p, "encoder.latent", c * coarse_cells, cfg.latent_dim, 2.0)?;
    dense(&mut p, "decoder.latent", cfg.latent_dim, c * coarse_cells, 1.0)?;
    block(&mut p, &mut conv, "decoder.coarse", cfg.coarse_blocks)?;
    conv(&mut p, "decoder.up", [c, c, 2, 2, 2], c, 2.0)?;
    block(&mut p, &mut conv, "decoder.fine", cfg.fine_blocks)?;
    conv(&mut p, "decoder.occupancy", [1, c, 1, 1, 1], c, 1.0)?;
    conv(&mut p, "decoder.features", [cfg.feature_channels, c, 1, 1, 1], c, 1.0)?;
    let f = cfg.feature_channels + 2;
    conv(&mut p, "sampler.hidden", [cfg.sampler_hidden, f, 1, 1, 1], f, 2.0)?;
    conv(&mut p, "sampler.offset", [3, cfg.sampler_hidden, 1, 1, 1], cfg.sampler_hidden, 1.0)?;
    Ok(p)
}

/// Network configuration together with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    grid: GridSpec,
    params: ModelParams,
    layout: Layout,
}

impl Model {
    /// Freshly initialized network over the canonical `[-1, 1]³` domain.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = build_params(&config, seed)?;
        Self::from_params(config, params)
    }

    /// Wraps existing parameters, checking that every expected layer is present
    /// with the right shape.
    pub fn from_params(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let layout = Layout::resolve(&config, &params)?;
        let reference = build_params(&config, 0)?;
        if reference.len() != params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, found {}",
                reference.len(),
                params.len()
            )));
        }
        for r in reference.iter() {
            let p = params.by_name(&r.name)?;
            if p.value.shape() != r.value.shape() {
                return Err(Error::Dimension(format!(
                    "parameter '{}' has shape {:?}, expected {:?}",
                    r.name,
                    p.value.shape(),
                    r.value.shape()
                )));
            }
        }
        Ok(Model {
            grid: GridSpec::unit_cube(config.resolution)?,
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn parameter_count(&self, group: ParamGroup) -> usize {
        self.params.parameter_count(group)
    }

    /// Recording context for a forward pass; parameters are tracked for
    /// gradients when `train` is set.
    pub fn session(&self, train: bool) -> Session<'_> {
        Session {
            model: self,
            graph: Graph::new(),
            bound: vec![None; self.params.len()],
            train,
        }
    }

    pub fn encode(&self, cloud: &PointCloud) -> Result<LatentCode> {
        let mut s = self.session(false);
        let z = s.encode(cloud)?;
        let value = s.graph.value(z);
        value.check_finite("latent code")?;
        Ok(LatentCode(value.data().to_vec()))
    }

    pub fn decode(&self, z: &LatentCode) -> Result<SurfaceDescriptor> {
        let mut s = self.session(false);
        let zv = s.latent(z)?;
        let (o, f) = s.decode(zv)?;
        s.graph.value(o).check_finite("occupancy")?;
        s.graph.value(f).check_finite("feature map")?;
        Ok(SurfaceDescriptor {
            occupancy: s.graph.value(o).clone(),
            features: s.graph.value(f).clone(),
        })
    }

    pub fn sample_offsets(&self, descriptor: &SurfaceDescriptor, uv: &SamplingCoordinates) -> Result<OffsetField> {
        let mut s = self.session(false);
        let n = self.config.resolution;
        let f = s.graph.constant(descriptor.features.clone().reshape(&[
            1,
            self.config.feature_channels,
            n,
            n,
            n,
        ])?);
        let d = s.sample_offsets(f, uv)?;
        OffsetField::new(n, s.graph.value(d).data().to_vec())
    }

    /// Decodes once, then draws `passes` independent realizations (fresh
    /// topology and fresh `(u, v)` each time) and concatenates them.
    pub fn sample_cloud(&self, z: &LatentCode, passes: usize, seed: u64) -> Result<PointCloud> {
        let descriptor = self.decode(z)?;
        self.sample_descriptor(&descriptor, passes, seed)
    }

    pub fn sample_descriptor(&self, descriptor: &SurfaceDescriptor, passes: usize, seed: u64) -> Result<PointCloud> {
        let mut rng = seeded(seed);
        sample_passes(descriptor.occupancy.data(), &self.grid, passes, &mut rng, |uv| {
            self.sample_offsets(descriptor, uv)
        })
    }
}

/// Multi-pass generation from a fixed occupancy field; `offsets` maps fresh
/// sampling coordinates to an offset field.
pub fn sample_passes<F>(
    occupancy: &[f64],
    grid: &GridSpec,
    passes: usize,
    rng: &mut StreamRng,
    mut offsets: F,
) -> Result<PointCloud>
where
    F: FnMut(&SamplingCoordinates) -> Result<OffsetField>,
{
    if passes == 0 {
        return Err(Error::Contract("sample_cloud needs at least one pass".into()));
    }
    let n = grid.resolution();
    let mut cloud = PointCloud::default();
    for _ in 0..passes {
        let topology = sample_topology(occupancy, n, rng)?;
        let uv = SamplingCoordinates::random(n, rng);
        let delta = offsets(&uv)?;
        cloud.extend(realize_points(&topology, &delta, grid)?);
    }
    Ok(cloud)
}

/// Gradients of one backward pass, keyed by parameter index.
pub type ParamGrads = Vec<(usize, Vec<f64>)>;

/// A graph under construction plus the parameter leaves bound into it.
pub struct Session<'m> {
    model: &'m Model,
    pub graph: Graph,
    bound: Vec<Option<Var>>,
    train: bool,
}

impl<'m> Session<'m> {
    pub fn model(&self) -> &'m Model {
        self.model
    }

    fn param(&mut self, i: usize) -> Var {
        if let Some(v) = self.bound[i] {
            return v;
        }
        let t = self.model.params.get(i).value.clone();
        let v = if self.train {
            self.graph.param_leaf(t, i)
        } else {
            self.graph.constant(t)
        };
        self.bound[i] = Some(v);
        v
    }

    fn dense(&mut self, x: Var, a: Affine) -> Result<Var> {
        let (w, b) = (self.param(a.weight), self.param(a.bias));
        self.graph.linear(x, w, Some(b))
    }

    fn conv(&mut self, x: Var, a: Affine, stride: usize, padding: usize) -> Result<Var> {
        let w = self.param(a.weight);
        let y = self.graph.conv3d(x, w, stride, padding)?;
        let b = self.param(a.bias);
        self.graph.channel_bias(y, b)
    }

    fn conv_t(&mut self, x: Var, a: Affine, stride: usize) -> Result<Var> {
        let w = self.param(a.weight);
        let y = self.graph.conv3d_transposed(x, w, stride, 0)?;
        let b = self.param(a.bias);
        self.graph.channel_bias(y, b)
    }

    /// Pre-activation residual block: `x + conv(relu(conv(relu(x))))`.
    fn residual(&mut self, x: Var, block: ResBlock) -> Result<Var> {
        let h = self.graph.relu(x);
        let h = self.conv(h, block.first, 1, 1)?;
        let h = self.graph.relu(h);
        let h = self.conv(h, block.second, 1, 1)?;
        self.graph.add(x, h)
    }

    /// Latent code as a graph leaf (no gradient).
    pub fn latent(&mut self, z: &LatentCode) -> Result<Var> {
        if z.dim() != self.model.config.latent_dim {
            return Err(Error::Contract(format!(
                "latent has {} entries, model expects {}",
                z.dim(),
                self.model.config.latent_dim
            )));
        }
        if z.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("latent code has non-finite entries".into()));
        }
        Ok(self.graph.constant(Tensor::new(vec![z.dim()], z.0.clone())?))
    }

    /// Encoder forward; returns `[latent_dim]`.
    pub fn encode(&mut self, cloud: &PointCloud) -> Result<Var> {
        cloud.require_non_empty("encode")?;
        let grid = *self.model.grid();
        let cells = voxel_indices(cloud, &grid)?;
        // Per-point input: position inside its own voxel, in cell units.
        let h = grid.cell_edge();
        let mut local = Vec::with_capacity(3 * cloud.len());
        for (p, &cell) in cloud.points().iter().zip(&cells) {
            let c = grid.flat_center(cell);
            local.extend([(p.x - c.x) / h, (p.y - c.y) / h, (p.z - c.z) / h]);
        }
        let mut x = self.graph.constant(Tensor::new(vec![cloud.len(), 3], local)?);
        let layout = self.model.layout.clone();
        for a in &layout.point {
            x = self.dense(x, *a)?;
            x = self.graph.relu(x);
        }
        let n = grid.resolution();
        let c = self.model.config.channels();
        let pooled = self.graph.grid_max_pool(x, &cells, grid.cells())?;
        let mut v = self.graph.reshape(pooled, &[1, c, n, n, n])?;
        for b in &layout.enc_fine {
            v = self.residual(v, *b)?;
        }
        v = self.graph.relu(v);
        v = self.conv(v, layout.down, 2, 0)?;
        for b in &layout.enc_coarse {
            v = self.residual(v, *b)?;
        }
        v = self.graph.relu(v);
        let flat_len = self.graph.value(v).len();
        let flat = self.graph.reshape(v, &[1, flat_len])?;
        let z = self.dense(flat, layout.to_latent)?;
        self.graph.reshape(z, &[self.model.config.latent_dim])
    }

    /// Decoder forward from a `[latent_dim]` variable; returns the occupancy
    /// `[1, N, N, N]` and features `[C_F, N, N, N]`.
    pub fn decode(&mut self, z: Var) -> Result<(Var, Var)> {
        let cfg = &self.model.config;
        let (n, m, c, cf) = (cfg.resolution, cfg.coarse_resolution(), cfg.channels(), cfg.feature_channels);
        let layout = self.model.layout.clone();
        let z2 = self.graph.reshape(z, &[1, cfg.latent_dim])?;
        let h = self.dense(z2, layout.from_latent)?;
        let mut v = self.graph.reshape(h, &[1, c, m, m, m])?;
        for b in &layout.dec_coarse {
            v = self.residual(v, *b)?;
        }
        v = self.graph.relu(v);
        v = self.conv_t(v, layout.up, 2)?;
        for b in &layout.dec_fine {
            v = self.residual(v, *b)?;
        }
        v = self.graph.relu(v);
        let logits = self.conv(v, layout.occupancy, 1, 0)?;
        let o = self.graph.sigmoid(logits);
        let o = self.graph.reshape(o, &[1, n, n, n])?;
        let f = self.conv(v, layout.features, 1, 0)?;
        let f = self.graph.reshape(f, &[cf, n, n, n])?;
        Ok((o, f))
    }

    /// Sampling layer: `tanh(conv(relu(conv([F ‖ u ‖ v]))))/2`, shape `[3, N, N, N]`.
    pub fn sample_offsets(&mut self, features: Var, uv: &SamplingCoordinates) -> Result<Var> {
        let n = self.model.config.resolution;
        let cf = self.model.config.feature_channels;
        if uv.resolution() != n {
            return Err(Error::Dimension(format!(
                "sampling coordinates at resolution {}, model at {n}",
                uv.resolution()
            )));
        }
        let layout = self.model.layout.clone();
        let f = self.graph.reshape(features, &[1, cf, n, n, n])?;
        let noise = self.graph.constant(Tensor::new(vec![1, 2, n, n, n], uv.data().to_vec())?);
        let x = self.graph.concat(&[f, noise], 1)?;
        let h = self.conv(x, layout.sampler_hidden, 1, 0)?;
        let h = self.graph.relu(h);
        let out = self.conv(h, layout.sampler_out, 1, 0)?;
        let t = self.graph.tanh(out);
        let half = self.graph.scale(t, 0.5);
        self.graph.reshape(half, &[3, n, n, n])
    }

    /// Runs backward from `loss` and returns the parameter gradients.
    pub fn backward(mut self, loss: Var) -> Result<ParamGrads> {
        self.graph.backward(loss)?;
        let mut grads: ParamGrads = self
            .graph
            .param_grads()
            .map(|(i, g)| (i, g.to_vec()))
            .collect();
        grads.sort_by_key(|(i, _)| *i);
        Ok(grads)
    }
}
