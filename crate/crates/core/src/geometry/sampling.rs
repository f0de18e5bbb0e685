use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::{Point, PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Area-weighted uniform sampler over a mesh surface.
#[derive(Clone, Debug)]
pub struct SurfaceSampler {
    mesh: TriangleMesh,
    pick: WeightedIndex<f64>,
}

impl SurfaceSampler {
    pub fn new(mesh: &TriangleMesh) -> Result<Self> {
        let pick = WeightedIndex::new(mesh.triangle_areas())
            .map_err(|e| Error::Geometry(format!("cannot sample surface: {e}")))?;
        Ok(SurfaceSampler {
            mesh: mesh.clone(),
            pick,
        })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    /// One uniform surface point: a triangle drawn in proportion to its area,
    /// then the barycentric map `(1-√u, √u(1-v), √u·v)`.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let t = self.pick.sample(rng);
        let (u, v): (f64, f64) = (rng.gen(), rng.gen());
        let su = u.sqrt();
        let [a, b, c] = self.mesh.triangle(t);
        Point::from(a.coords * (1.0 - su) + b.coords * (su * (1.0 - v)) + c.coords * (su * v))
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> PointCloud {
        (0..count).map(|_| self.sample_point(rng)).collect()
    }

    /// Like [`SurfaceSampler::sample`] but also returns the triangle of each point.
    pub fn sample_with_triangles<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> (PointCloud, Vec<usize>) {
        let mut tris = Vec::with_capacity(count);
        let mut pts = Vec::with_capacity(count);
        for _ in 0..count {
            let t = self.pick.sample(rng);
            let (u, v): (f64, f64) = (rng.gen(), rng.gen());
            let su = u.sqrt();
            let [a, b, c] = self.mesh.triangle(t);
            pts.push(Point::from(
                a.coords * (1.0 - su) + b.coords * (su * (1.0 - v)) + c.coords * (su * v),
            ));
            tris.push(t);
        }
        (pts.into_iter().collect(), tris)
    }
}

/// `count` independent uniform samples of the surface of `mesh`.
pub fn sample_surface(mesh: &TriangleMesh, count: usize, seed: u64) -> Result<PointCloud> {
    if count == 0 {
        return Err(Error::Contract("sample count must be at least 1".into()));
    }
    let sampler = SurfaceSampler::new(mesh)?;
    Ok(sampler.sample(count, &mut seeded(seed)))
}
