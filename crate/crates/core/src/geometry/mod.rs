//! Ground-truth surfaces and point clouds.

mod distance;
mod mesh;
mod sampling;
mod shapes;

pub use distance::{
    closest_point_on_triangle, point_to_mesh_distance, point_to_mesh_distances,
    point_to_mesh_distances_pruned, DistanceStats,
};
pub use mesh::TriangleMesh;
pub use sampling::{sample_surface, SurfaceSampler};
pub use shapes::{procedural_shape, ShapeFamily, ShapeParams};

use nalgebra::{Point3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

pub type Point = Point3<f64>;

/// Margin kept between a normalized shape and the faces of `[-1, 1]³`.
pub const DEFAULT_MARGIN: f64 = 0.05;

/// Coordinate axis; the gravity axis defaults to [`Axis::Y`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Axis {
    X,
    #[default]
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> Unit<Vector3<f64>> {
        match self {
            Axis::X => Vector3::x_axis(),
            Axis::Y => Vector3::y_axis(),
            Axis::Z => Vector3::z_axis(),
        }
    }
}

/// Ordered set of 3D positions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite coordinates.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::Numeric(format!("non-finite point {p}")));
        }
        Ok(PointCloud { points })
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point::new(c[0], c[1], c[2])).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fails with a contract error when the cloud has no points.
    pub fn require_non_empty(&self, what: &str) -> Result<()> {
        if self.points.is_empty() {
            Err(Error::Contract(format!("{what}: point cloud is empty")))
        } else {
            Ok(())
        }
    }

    pub fn extend(&mut self, other: PointCloud) {
        self.points.extend(other.points);
    }

    pub fn map(&self, f: impl Fn(&Point) -> Point) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(f).collect(),
        }
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        PointCloud {
            points: iter.into_iter().collect(),
        }
    }
}

/// Rotation by `angle` radians about the gravity axis (+Y).
pub fn rotate_gravity_axis(cloud: &PointCloud, angle: f64) -> PointCloud {
    rotate_about(cloud, Axis::Y, angle)
}

/// Right-handed rotation about a coordinate axis; the coordinate along the
/// axis is copied through unchanged.
pub fn rotate_about(cloud: &PointCloud, axis: Axis, angle: f64) -> PointCloud {
    cloud.map(|p| rotate_point(p, axis, angle))
}

pub fn rotate_point(p: &Point, axis: Axis, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    match axis {
        Axis::X => Point::new(p.x, c * p.y - s * p.z, s * p.y + c * p.z),
        Axis::Y => Point::new(c * p.x + s * p.z, p.y, -s * p.x + c * p.z),
        Axis::Z => Point::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z),
    }
}

/// Arbitrary rigid motion `p ↦ R·p + t`.
pub fn rigid_transform(p: &Point, rotation: &Rotation3<f64>, translation: &Vector3<f64>) -> Point {
    rotation * p + translation
}
