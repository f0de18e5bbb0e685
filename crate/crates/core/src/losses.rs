//! Training objectives.
//!
//! Chamfer terms are sums (not means) of Euclidean nearest-neighbour
//! distances. Nearest neighbours are found by exhaustive scan; ties go to the
//! lowest index so results never depend on evaluation order.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};
use crate::grid::{realize_with_sources, sample_topology, GridSpec, OffsetField, Topology};
use crate::rng::seeded;
use crate::tensor::{Graph, Var};

/// Clamp applied to occupancies inside the cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Index and distance of the nearest point of `to`, first index on ties.
pub fn nearest(p: &Point, to: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, q) in to.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// `d(X|Y)`: per-point distance from every `x` to its nearest `y`.
pub fn directed_distances(x: &PointCloud, y: &PointCloud) -> Result<Vec<f64>> {
    x.require_non_empty("chamfer")?;
    y.require_non_empty("chamfer")?;
    Ok(x.points().iter().map(|p| nearest(p, y.points()).1).collect())
}

/// Chamfer pseudo-distance `d(X|Y) + d(Y|X)` with unsquared norms.
pub fn chamfer(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    let a: f64 = directed_distances(x, y)?.iter().sum();
    let b: f64 = directed_distances(y, x)?.iter().sum();
    Ok(a + b)
}

/// Cardinality-normalized symmetric Chamfer: the average of the two mean
/// directed distances. Used for evaluation, where clouds differ in size.
pub fn mean_chamfer(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    let a = directed_distances(x, y)?;
    let b = directed_distances(y, x)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(0.5 * (mean(&a) + mean(&b)))
}

/// Gradient of `‖x - y‖` with respect to the cell-unit offset that placed `x`.
fn offset_gradient(x: &Point, y: &Point, dist: f64, cell_edge: f64) -> [f64; 3] {
    if dist == 0.0 {
        return [0.0; 3];
    }
    let d = (x - y) * (cell_edge / dist);
    [d.x, d.y, d.z]
}

fn check_fields(g: &Graph, occupancy: Var, offsets: Var, grid: &GridSpec) -> Result<()> {
    let cells = grid.cells();
    if g.value(occupancy).len() != cells || g.value(offsets).len() != 3 * cells {
        return Err(Error::Dimension(format!(
            "occupancy ({}) / offsets ({}) do not match a grid of {cells} cells",
            g.value(occupancy).len(),
            g.value(offsets).len()
        )));
    }
    Ok(())
}

fn candidate_points(g: &Graph, offsets: Var, grid: &GridSpec) -> Result<Vec<Point>> {
    let field = OffsetField::new(grid.resolution(), g.value(offsets).data().to_vec())?;
    let h = grid.cell_edge();
    Ok((0..grid.cells())
        .map(|n| {
            let c = grid.flat_center(n);
            let d = field.offset(n);
            Point::new(c.x + d[0] * h, c.y + d[1] * h, c.z + d[2] * h)
        })
        .collect())
}

/// `Σ_n o_n · min_y ‖x_n − y‖` over every candidate voxel: the exact
/// expectation of `d(X|Y)` over topologies. Differentiable in `O` and `Δ`.
pub fn expected_chamfer_term1(
    g: &mut Graph,
    occupancy: Var,
    offsets: Var,
    target: &PointCloud,
    grid: &GridSpec,
) -> Result<Var> {
    target.require_non_empty("expected_chamfer_term1 target")?;
    check_fields(g, occupancy, offsets, grid)?;
    let h = grid.cell_edge();
    let xs = candidate_points(g, offsets, grid)?;
    let mut values = Vec::with_capacity(xs.len());
    let mut links = Vec::with_capacity(xs.len());
    for (n, x) in xs.iter().enumerate() {
        let (j, d) = nearest(x, target.points());
        values.push(d);
        links.push(Some((n, offset_gradient(x, &target.points()[j], d, h))));
    }
    let dist = g.offset_distance(offsets, values, links)?;
    let cells = grid.cells();
    let o = g.reshape(occupancy, &[cells])?;
    let weighted = g.mul(o, dist)?;
    Ok(g.sum(weighted))
}

/// Topology used by the single-realization term: one draw, one redraw if
/// empty, then the most probable voxel forced on.
pub fn draw_nonempty_topology(occupancy: &[f64], resolution: usize, seed: u64) -> Result<Topology> {
    let mut rng = seeded(seed);
    for _ in 0..2 {
        let t = sample_topology(occupancy, resolution, &mut rng)?;
        if !t.is_empty() {
            return Ok(t);
        }
    }
    let mut t = Topology::empty(resolution);
    let best = occupancy
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &o)| if o > b.1 { (i, o) } else { b });
    t.set(best.0, true);
    Ok(t)
}

/// `Σ_y min_{x ∈ X(T*, Δ)} ‖x − y‖` for one seeded topology draw. The draw is
/// not differentiated; the gradient reaches `Δ` only.
pub fn sampled_chamfer_term2(
    g: &mut Graph,
    occupancy: Var,
    offsets: Var,
    target: &PointCloud,
    grid: &GridSpec,
    seed: u64,
) -> Result<Var> {
    target.require_non_empty("sampled_chamfer_term2 target")?;
    check_fields(g, occupancy, offsets, grid)?;
    let topology = draw_nonempty_topology(g.value(occupancy).data(), grid.resolution(), seed)?;
    let field = OffsetField::new(grid.resolution(), g.value(offsets).data().to_vec())?;
    let (realized, sources) = realize_with_sources(&topology, &field, grid)?;
    let h = grid.cell_edge();
    let mut values = Vec::with_capacity(target.len());
    let mut links = Vec::with_capacity(target.len());
    for y in target.points() {
        let (i, d) = nearest(y, realized.points());
        values.push(d);
        links.push(Some((sources[i], offset_gradient(&realized.points()[i], y, d, h))));
    }
    let dist = g.offset_distance(offsets, values, links)?;
    Ok(g.sum(dist))
}

/// Summed cross-entropy of occupancy against a target topology, clamped at
/// [`BCE_EPS`].
pub fn bce_occupancy(g: &mut Graph, occupancy: Var, target: &Topology) -> Result<Var> {
    g.bce(occupancy, target.cells(), BCE_EPS)
}

/// `Σ_b ‖z_b − z̄‖²` with `z̄` the mean of the group.
pub fn consistency_loss(g: &mut Graph, latents: &[Var]) -> Result<Var> {
    if latents.len() < 2 {
        return Err(Error::Contract(format!(
            "consistency loss needs at least 2 latents, got {}",
            latents.len()
        )));
    }
    let total = g.add_all(latents)?;
    let mean = g.scale(total, 1.0 / latents.len() as f64);
    let mut terms = Vec::with_capacity(latents.len());
    for &z in latents {
        let d = g.sub(z, mean)?;
        let sq = g.mul(d, d)?;
        terms.push(g.sum(sq));
    }
    g.add_all(&terms)
}

/// Weights of the three objectives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub chamfer: f64,
    pub bce: f64,
    pub consistency: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            chamfer: 1.0,
            bce: 1.0,
            consistency: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("chamfer", self.chamfer), ("bce", self.bce), ("consistency", self.consistency)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Contract(format!("loss weight {name} = {w} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

impl FromStr for LossWeights {
    type Err = Error;

    /// `chamfer,bce,consistency`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Contract(format!("loss weights '{s}': {e}")))?;
        let [chamfer, bce, consistency] = parts[..] else {
            return Err(Error::Contract(format!("loss weights '{s}' need three values")));
        };
        let w = LossWeights { chamfer, bce, consistency };
        w.validate()?;
        Ok(w)
    }
}

/// Scalar loss variables entering the weighted total.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub term1: Var,
    pub term2: Var,
    pub bce: Var,
    pub consistency: Option<Var>,
}

/// `w_c·(term1 + term2) + w_b·bce + w_s·consistency`.
pub fn total_loss(g: &mut Graph, terms: &LossTerms, weights: &LossWeights) -> Result<Var> {
    weights.validate()?;
    let chamfer = g.add(terms.term1, terms.term2)?;
    let mut parts = vec![g.scale(chamfer, weights.chamfer), g.scale(terms.bce, weights.bce)];
    if let Some(c) = terms.consistency {
        parts.push(g.scale(c, weights.consistency));
    }
    g.add_all(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn cloud(p: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_xyz(p).unwrap()
    }

    #[test]
    fn chamfer_examples() {
        let x = cloud(&[[0.0, 0.0, 0.0]]);
        let y = cloud(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(chamfer(&x, &y).unwrap(), 3.0);
        assert_eq!(chamfer(&y, &y).unwrap(), 0.0);
        assert!(chamfer(&PointCloud::default(), &y).is_err());
    }

    #[test]
    fn term1_hand_case() {
        let grid = GridSpec::unit_cube(2).unwrap();
        let mut occ = vec![0.0; 8];
        occ[0] = 0.3;
        occ[1] = 0.6;
        let c0 = grid.flat_center(0);
        let c1 = grid.flat_center(1);
        let mut g = Graph::new();
        let o = g.constant(Tensor::new(vec![1, 2, 2, 2], occ).unwrap());
        let d = g.constant(Tensor::zeros(&[3, 2, 2, 2]));
        let y = PointCloud::new(vec![c0]).unwrap();
        let t = expected_chamfer_term1(&mut g, o, d, &y, &grid).unwrap();
        let want = 0.6 * (c1 - c0).norm();
        assert!((g.value(t).item() - want).abs() < 1e-15);
    }

    #[test]
    fn term2_single_voxel() {
        let grid = GridSpec::unit_cube(2).unwrap();
        let mut occ = vec![0.0; 8];
        occ[5] = 1.0;
        let c = grid.flat_center(5);
        let y = cloud(&[[0.1, 0.2, 0.3], [-0.7, 0.4, 0.9]]);
        let mut g = Graph::new();
        let o = g.constant(Tensor::new(vec![8], occ).unwrap());
        let d = g.constant(Tensor::zeros(&[24]));
        let t = sampled_chamfer_term2(&mut g, o, d, &y, &grid, 3).unwrap();
        let want: f64 = y.points().iter().map(|p| (p - c).norm()).sum();
        assert!((g.value(t).item() - want).abs() < 1e-14);
    }

    #[test]
    fn empty_realization_forces_best_voxel() {
        let mut occ = vec![0.0; 8];
        occ[6] = 1e-300;
        let t = draw_nonempty_topology(&occ, 2, 0).unwrap();
        assert_eq!(t.occupied().collect::<Vec<_>>(), vec![6]);
    }

    #[test]
    fn consistency_examples() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(vec![1], vec![0.0]).unwrap());
        let b = g.constant(Tensor::new(vec![1], vec![2.0]).unwrap());
        let l = consistency_loss(&mut g, &[a, b]).unwrap();
        assert_eq!(g.value(l).item(), 2.0);
        assert!(consistency_loss(&mut g, &[a]).is_err());
    }

    #[test]
    fn weights_parse() {
        let w: LossWeights = "1, 0.5, 0".parse().unwrap();
        assert_eq!(w.bce, 0.5);
        assert!("1,2".parse::<LossWeights>().is_err());
        assert!("1,-2,0".parse::<LossWeights>().is_err());
    }
}
