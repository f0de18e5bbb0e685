//! Voxel-grid parameterization of point clouds.
//!
//! A cloud is described by an occupancy field `O` (per-voxel Bernoulli
//! probability of emitting a point) and an offset field `Δ` (where inside its
//! voxel the point lands). Offsets are stored in cell units, `[-1/2, 1/2]³`,
//! and scaled by the physical cell edge only when points are realized.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};
use crate::tensor::Tensor;

/// Resolution and physical extent of a cubic voxel grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    resolution: usize,
    min: [f64; 3],
    edge: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::unit_cube(8).expect("valid default")
    }
}

impl GridSpec {
    /// Grid over `[min, min + edge]³`.
    pub fn new(resolution: usize, min: [f64; 3], edge: f64) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Contract(format!("grid resolution {resolution} below 2")));
        }
        if !(edge > 0.0 && edge.is_finite()) || min.iter().any(|m| !m.is_finite()) {
            return Err(Error::Contract(format!("invalid grid domain min={min:?} edge={edge}")));
        }
        Ok(GridSpec { resolution, min, edge })
    }

    /// Grid over the canonical domain `[-1, 1]³`.
    pub fn unit_cube(resolution: usize) -> Result<Self> {
        Self::new(resolution, [-1.0; 3], 2.0)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cells(&self) -> usize {
        self.resolution.pow(3)
    }

    pub fn domain_min(&self) -> [f64; 3] {
        self.min
    }

    pub fn domain_edge(&self) -> f64 {
        self.edge
    }

    pub fn cell_edge(&self) -> f64 {
        self.edge / self.resolution as f64
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.min[k] + self.edge)
    }

    pub fn flat_index(&self, v: [usize; 3]) -> usize {
        (v[0] * self.resolution + v[1]) * self.resolution + v[2]
    }

    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let n = self.resolution;
        [flat / (n * n), (flat / n) % n, flat % n]
    }

    pub fn voxel_center(&self, v: [usize; 3]) -> Point {
        let h = self.cell_edge();
        Point::new(
            self.min[0] + (v[0] as f64 + 0.5) * h,
            self.min[1] + (v[1] as f64 + 0.5) * h,
            self.min[2] + (v[2] as f64 + 0.5) * h,
        )
    }

    pub fn flat_center(&self, flat: usize) -> Point {
        self.voxel_center(self.unflatten(flat))
    }
}

/// Voxel containing `p`. Coordinates on the far faces of the domain clamp
/// into the last cell.
pub fn voxel_of(p: &Point, spec: &GridSpec) -> Result<[usize; 3]> {
    if !spec.contains(p) {
        return Err(Error::OutOfDomain { x: p.x, y: p.y, z: p.z });
    }
    let h = spec.cell_edge();
    let last = spec.resolution - 1;
    let mut v = [0; 3];
    for k in 0..3 {
        let i = ((p[k] - spec.min[k]) / h).floor();
        v[k] = (i.max(0.0) as usize).min(last);
    }
    Ok(v)
}

/// Flat voxel index of every point.
pub fn voxel_indices(cloud: &PointCloud, spec: &GridSpec) -> Result<Vec<usize>> {
    cloud
        .points()
        .iter()
        .map(|p| voxel_of(p, spec).map(|v| spec.flat_index(v)))
        .collect()
}

/// Binary per-voxel assignment of one realization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    resolution: usize,
    cells: Vec<bool>,
}

impl Topology {
    pub fn new(resolution: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != resolution.pow(3) {
            return Err(Error::Dimension(format!(
                "topology of resolution {resolution} needs {} cells, got {}",
                resolution.pow(3),
                cells.len()
            )));
        }
        Ok(Topology { resolution, cells })
    }

    pub fn empty(resolution: usize) -> Self {
        Topology {
            resolution,
            cells: vec![false; resolution.pow(3)],
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn set(&mut self, flat: usize, value: bool) {
        self.cells[flat] = value;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().enumerate().filter_map(|(i, &c)| c.then_some(i))
    }
}

/// Per-voxel offsets `[3, N³]` in cell units.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetField {
    resolution: usize,
    data: Vec<f64>,
}

impl OffsetField {
    pub fn new(resolution: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 3 * resolution.pow(3) {
            return Err(Error::Dimension(format!(
                "offset field of resolution {resolution} needs {} values, got {}",
                3 * resolution.pow(3),
                data.len()
            )));
        }
        Ok(OffsetField { resolution, data })
    }

    pub fn zeros(resolution: usize) -> Self {
        OffsetField {
            resolution,
            data: vec![0.0; 3 * resolution.pow(3)],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let n = (t.len() / 3) as f64;
        let resolution = n.cbrt().round() as usize;
        Self::new(resolution, t.data().to_vec())
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn offset(&self, flat: usize) -> [f64; 3] {
        let cells = self.resolution.pow(3);
        [self.data[flat], self.data[cells + flat], self.data[2 * cells + flat]]
    }

    /// True when every component lies in `[-1/2, 1/2]`.
    pub fn in_range(&self) -> bool {
        self.data.iter().all(|d| (-0.5..=0.5).contains(d))
    }
}

/// Occupancy `O` and feature map `F` produced by the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceDescriptor {
    /// `[1, N, N, N]`, entries in `[0, 1]`.
    pub occupancy: Tensor,
    /// `[C_F, N, N, N]`.
    pub features: Tensor,
}

impl SurfaceDescriptor {
    pub fn resolution(&self) -> usize {
        self.occupancy.shape()[1]
    }

    /// Expected number of points per realization, `Σ o_n`.
    pub fn expected_count(&self) -> f64 {
        self.occupancy.data().iter().sum()
    }
}

/// Marks every voxel containing at least one point.
pub fn voxelize(cloud: &PointCloud, spec: &GridSpec) -> Result<Topology> {
    let mut t = Topology::empty(spec.resolution());
    for p in cloud.points() {
        let v = voxel_of(p, spec)?;
        t.cells[spec.flat_index(v)] = true;
    }
    Ok(t)
}

/// Probability of one topology under independent Bernoulli cells, with its
/// logarithm computed separately so that large grids do not underflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopologyProbability {
    pub probability: f64,
    pub log_probability: f64,
}

pub fn topology_probability(occupancy: &[f64], topology: &Topology) -> Result<TopologyProbability> {
    if occupancy.len() != topology.cells.len() {
        return Err(Error::Dimension(format!(
            "{} occupancies against {} topology cells",
            occupancy.len(),
            topology.cells.len()
        )));
    }
    let mut probability = 1.0;
    let mut log_probability = 0.0;
    for (&o, &t) in occupancy.iter().zip(&topology.cells) {
        let p = if t { o } else { 1.0 - o };
        probability *= p;
        log_probability += p.ln();
    }
    Ok(TopologyProbability {
        probability,
        log_probability,
    })
}

/// One independent Bernoulli draw per voxel.
pub fn sample_topology<R: Rng + ?Sized>(occupancy: &[f64], resolution: usize, rng: &mut R) -> Result<Topology> {
    if let Some(o) = occupancy.iter().find(|o| !(0.0..=1.0).contains(*o)) {
        return Err(Error::Contract(format!("occupancy {o} outside [0, 1]")));
    }
    // Always consume one draw per voxel so streams stay aligned across fields.
    let cells = occupancy.iter().map(|&o| rng.gen::<f64>() < o).collect();
    Topology::new(resolution, cells)
}

/// Places one point per occupied voxel at `center + Δ·cell_edge`.
pub fn realize_points(topology: &Topology, offsets: &OffsetField, spec: &GridSpec) -> Result<PointCloud> {
    Ok(realize_with_sources(topology, offsets, spec)?.0)
}

/// [`realize_points`] together with the flat source voxel of every point.
pub fn realize_with_sources(
    topology: &Topology,
    offsets: &OffsetField,
    spec: &GridSpec,
) -> Result<(PointCloud, Vec<usize>)> {
    if topology.resolution != spec.resolution() || offsets.resolution != spec.resolution() {
        return Err(Error::Dimension(format!(
            "topology ({}) / offsets ({}) do not match grid resolution {}",
            topology.resolution,
            offsets.resolution,
            spec.resolution()
        )));
    }
    let h = spec.cell_edge();
    let mut points = Vec::with_capacity(topology.count());
    let mut sources = Vec::with_capacity(topology.count());
    for flat in topology.occupied() {
        let d = offsets.offset(flat);
        if d.iter().any(|c| !(-0.5..=0.5).contains(c)) {
            return Err(Error::Contract(format!(
                "offset {d:?} of voxel {flat} outside [-1/2, 1/2]"
            )));
        }
        let c = spec.flat_center(flat);
        points.push(Point::new(c.x + d[0] * h, c.y + d[1] * h, c.z + d[2] * h));
        sources.push(flat);
    }
    Ok((PointCloud::new(points)?, sources))
}
