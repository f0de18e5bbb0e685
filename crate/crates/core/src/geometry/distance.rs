use super::{Point, PointCloud, TriangleMesh};
use crate::error::Result;

/// Population mean and standard deviation of a set of distances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceStats {
    pub mean: f64,
    pub std: f64,
}

impl DistanceStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        DistanceStats {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Closest point to `p` on triangle `abc` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> Point {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

fn triangle_distance(p: &Point, tri: &[Point; 3]) -> f64 {
    if tri_area2(tri) == 0.0 {
        // Degenerate triangle: distance to its longest segment.
        return segment_distance(p, tri);
    }
    (p - closest_point_on_triangle(p, &tri[0], &tri[1], &tri[2])).norm()
}

fn tri_area2(t: &[Point; 3]) -> f64 {
    (t[1] - t[0]).cross(&(t[2] - t[0])).norm_squared()
}

fn segment_distance(p: &Point, t: &[Point; 3]) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..3 {
        let (a, b) = (t[k], t[(k + 1) % 3]);
        let ab = b - a;
        let len2 = ab.norm_squared();
        let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        best = best.min((p - (a + ab * s)).norm());
    }
    best
}

/// Exact Euclidean distance from every point to the closest point of the
/// mesh, by scanning all triangles.
pub fn point_to_mesh_distances(cloud: &PointCloud, mesh: &TriangleMesh) -> Vec<f64> {
    let tris: Vec<[Point; 3]> = (0..mesh.triangles().len()).map(|i| mesh.triangle(i)).collect();
    cloud
        .points()
        .iter()
        .map(|p| tris.iter().map(|t| triangle_distance(p, t)).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Same result as [`point_to_mesh_distances`], skipping triangles whose
/// bounding sphere is provably farther than the best distance so far.
pub fn point_to_mesh_distances_pruned(cloud: &PointCloud, mesh: &TriangleMesh) -> Vec<f64> {
    let tris: Vec<([Point; 3], Point, f64)> = (0..mesh.triangles().len())
        .map(|i| {
            let t = mesh.triangle(i);
            let c = Point::from((t[0].coords + t[1].coords + t[2].coords) / 3.0);
            let r = t.iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
            (t, c, r)
        })
        .collect();
    cloud
        .points()
        .iter()
        .map(|p| {
            let mut order: Vec<(f64, usize)> = tris
                .iter()
                .enumerate()
                .map(|(i, (_, c, r))| (((p - c).norm() - r).max(0.0), i))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut best = f64::INFINITY;
            for (bound, i) in order {
                // Slack keeps rounding in the bound from discarding the true minimizer.
                if bound > best + 1e-9 {
                    break;
                }
                best = best.min(triangle_distance(p, &tris[i].0));
            }
            best
        })
        .collect()
}

/// Mean and standard deviation of point-to-surface distances.
pub fn point_to_mesh_distance(cloud: &PointCloud, mesh: &TriangleMesh) -> Result<DistanceStats> {
    cloud.require_non_empty("point_to_mesh_distance")?;
    Ok(DistanceStats::from_values(&point_to_mesh_distances(cloud, mesh)))
}
