use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{procedural_shape, Axis, ShapeFamily, SurfaceSampler, TriangleMesh, DEFAULT_MARGIN};
use crate::rng::{derive, seeded};

/// Default tessellation of generated shapes.
pub const MESH_RESOLUTION: usize = 32;

/// One training surface, normalized into the canonical domain.
#[derive(Clone, Debug)]
pub struct ShapeRecord {
    pub name: String,
    pub family: String,
    pub mesh: TriangleMesh,
    /// Closed-form area of the normalized shape, when known.
    pub analytic_area: Option<f64>,
    sampler: SurfaceSampler,
}

impl ShapeRecord {
    pub fn new(name: impl Into<String>, family: impl Into<String>, mesh: TriangleMesh) -> Result<Self> {
        let sampler = SurfaceSampler::new(&mesh)?;
        Ok(ShapeRecord {
            name: name.into(),
            family: family.into(),
            mesh,
            analytic_area: None,
            sampler,
        })
    }

    pub fn sampler(&self) -> &SurfaceSampler {
        &self.sampler
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub shapes: Vec<ShapeRecord>,
}

impl Dataset {
    pub fn new(shapes: Vec<ShapeRecord>) -> Self {
        Dataset { shapes }
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    /// `per_family` randomized shapes of each family, normalized with the
    /// default margin around the Y axis. Shape `i` of a family depends only on
    /// `(seed, family, i)`.
    pub fn procedural(families: &[ShapeFamily], per_family: usize, mesh_resolution: usize, seed: u64) -> Result<Self> {
        let mut shapes = Vec::with_capacity(families.len() * per_family);
        for &family in families {
            for i in 0..per_family {
                let mut rng = seeded(derive(seed, &[family as u64, i as u64]));
                let params = family.spread_params(i, &mut rng);
                let raw = procedural_shape(&params, mesh_resolution)?;
                let mesh = raw.normalize(DEFAULT_MARGIN, Axis::Y)?;
                let scale2 = mesh.area() / raw.area();
                let mut rec = ShapeRecord::new(format!("{family}_{i:04}"), family.name(), mesh)?;
                rec.analytic_area = Some(params.analytic_area() * scale2);
                shapes.push(rec);
            }
        }
        Ok(Dataset { shapes })
    }

    /// Splits off the last `per_family` shapes of every family label.
    pub fn split_holdout(self, per_family: usize) -> (Dataset, Dataset) {
        let mut families: Vec<String> = Vec::new();
        for s in &self.shapes {
            if !families.contains(&s.family) {
                families.push(s.family.clone());
            }
        }
        let mut held = vec![false; self.shapes.len()];
        for f in &families {
            let idx: Vec<usize> = (0..self.shapes.len()).filter(|&i| &self.shapes[i].family == f).collect();
            for &i in idx.iter().rev().take(per_family) {
                held[i] = true;
            }
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (s, h) in self.shapes.into_iter().zip(held) {
            if h {
                test.push(s)
            } else {
                train.push(s)
            }
        }
        (Dataset::new(train), Dataset::new(test))
    }

    pub(crate) fn require_non_empty(&self) -> Result<()> {
        if self.shapes.is_empty() {
            return Err(Error::Contract("dataset is empty".into()));
        }
        Ok(())
    }
}

/// Uniform angle for a random rotation about the gravity axis.
pub(crate) fn random_angle(rng: &mut crate::rng::Rng) -> f64 {
    rng.gen_range(0.0..std::f64::consts::TAU)
}
