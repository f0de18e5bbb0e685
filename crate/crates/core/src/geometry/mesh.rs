use nalgebra::{Rotation3, Vector3};

use super::{rotate_point, Axis, Point};
use crate::error::{Error, Result};

/// Indexed triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates indices, finiteness and positive total area.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::Geometry(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::Geometry("non-finite vertex".into()));
        }
        let mesh = TriangleMesh { vertices, triangles };
        let area = mesh.area();
        if area.is_nan() || area <= 0.0 {
            return Err(Error::Geometry("mesh has zero total surface area".into()));
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn triangle_areas(&self) -> Vec<f64> {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).collect()
    }

    /// Total surface area, summed in triangle order.
    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Largest distance between two bounding-box corners.
    pub fn bounding_diameter(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    /// Centers the mesh and scales it into `[-1, 1]³` with `margin` to spare,
    /// using the radial extent around the gravity axis so that any rotation
    /// about that axis stays inside the cube.
    pub fn normalize(&self, margin: f64, gravity: Axis) -> Result<TriangleMesh> {
        if !(0.0..1.0).contains(&margin) {
            return Err(Error::Geometry(format!("margin {margin} outside [0, 1)")));
        }
        let (lo, hi) = self.bounds();
        let center = nalgebra::center(&lo, &hi);
        let up = gravity.index();
        let mut radial: f64 = 0.0;
        let mut height: f64 = 0.0;
        for v in &self.vertices {
            let d = v - center;
            let mut r2 = 0.0;
            for k in 0..3 {
                if k == up {
                    height = height.max(d[k].abs());
                } else {
                    r2 += d[k] * d[k];
                }
            }
            radial = radial.max(r2.sqrt());
        }
        let extent = radial.max(height);
        if extent.is_nan() || extent <= 0.0 {
            return Err(Error::Geometry("mesh is degenerate (zero extent)".into()));
        }
        let s = (1.0 - margin) / extent;
        let vertices = self
            .vertices
            .iter()
            .map(|v| Point::from((v - center) * s))
            .collect();
        TriangleMesh::new(vertices, self.triangles.clone())
    }

    pub fn map_vertices(&self, f: impl Fn(&Point) -> Point) -> Result<TriangleMesh> {
        TriangleMesh::new(self.vertices.iter().map(f).collect(), self.triangles.clone())
    }

    pub fn rotate_about(&self, axis: Axis, angle: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| rotate_point(v, axis, angle)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn transform(&self, rotation: &Rotation3<f64>, translation: &Vector3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| rotation * v + translation).collect(),
            triangles: self.triangles.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{procedural_shape, ShapeParams};
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_meshes() {
        let v = vec![Point::origin(), Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0)];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert!((TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap().area() - 0.5).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn normalized_mesh_survives_gravity_rotation(
            a in 0.2..3.0f64, b in 0.2..3.0f64, c in 0.2..3.0f64, angle in 0.0..6.3f64
        ) {
            // A long thin box along X would leave the cube after a quarter turn
            // if normalization used per-axis bounds.
            let mesh = procedural_shape(&ShapeParams::Box { extents: [a, b, c] }, 4).unwrap();
            let n = mesh.normalize(0.05, Axis::Y).unwrap();
            let r = n.rotate_about(Axis::Y, angle);
            for v in r.vertices() {
                for k in 0..3 {
                    prop_assert!(v[k].abs() <= 0.95 + 1e-12);
                }
            }
        }
    }
}
