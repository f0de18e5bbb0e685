use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{Point, TriangleMesh};
use crate::error::{Error, Result};

/// Procedural shape families used as a stand-in training corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeFamily {
    Sphere,
    Torus,
    Box,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 3] = [ShapeFamily::Sphere, ShapeFamily::Torus, ShapeFamily::Box];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Sphere => "sphere",
            ShapeFamily::Torus => "torus",
            ShapeFamily::Box => "box",
        }
    }

    /// Number of free shape parameters after normalization.
    pub fn dof(self) -> usize {
        match self {
            ShapeFamily::Torus => 2,
            ShapeFamily::Sphere | ShapeFamily::Box => 3,
        }
    }

    /// Maps unit-cube coordinates (`dof()` of them) onto the family's
    /// parameter ranges. Spheres are stretched into ellipsoids and boxes get
    /// independent edges so that shapes stay distinct after normalization.
    pub fn params_from_unit(self, u: &[f64]) -> ShapeParams {
        assert_eq!(u.len(), self.dof(), "one unit coordinate per parameter");
        let lerp = |t: f64, lo: f64, hi: f64| lo + t * (hi - lo);
        match self {
            ShapeFamily::Sphere => ShapeParams::Sphere {
                radii: [lerp(u[0], 0.45, 1.0), lerp(u[1], 0.45, 1.0), lerp(u[2], 0.45, 1.0)],
            },
            ShapeFamily::Torus => {
                let major = 1.0;
                let minor = lerp(u[0], 0.15, 0.6) * major;
                ShapeParams::Torus {
                    major,
                    minor,
                    height: lerp(u[1], 0.4, 1.6) * minor,
                }
            }
            ShapeFamily::Box => ShapeParams::Box {
                extents: [lerp(u[0], 0.6, 2.0), lerp(u[1], 0.6, 2.0), lerp(u[2], 0.6, 2.0)],
            },
        }
    }

    /// Independent uniform draw from the parameter ranges.
    pub fn random_params<R: Rng + ?Sized>(self, rng: &mut R) -> ShapeParams {
        let u: Vec<f64> = (0..self.dof()).map(|_| rng.gen::<f64>()).collect();
        self.params_from_unit(&u)
    }

    /// Parameters for the `index`-th member of a family, taken from a jittered
    /// Kronecker sequence. Any run of consecutive indices covers the parameter
    /// box evenly, so small subsets never contain near-duplicate shapes.
    pub fn spread_params<R: Rng + ?Sized>(self, index: usize, rng: &mut R) -> ShapeParams {
        let d = self.dof();
        // Positive root of x^(d+1) = x + 1.
        let mut phi = 1.5_f64;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
        }
        let u: Vec<f64> = (1..=d)
            .map(|k| {
                let alpha = phi.powi(-(k as i32));
                let jitter = rng.gen_range(-SPREAD_JITTER..SPREAD_JITTER);
                (0.5 + index as f64 * alpha + jitter).rem_euclid(1.0)
            })
            .collect();
        self.params_from_unit(&u)
    }
}

const SPREAD_JITTER: f64 = 0.01;

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sphere" => Ok(ShapeFamily::Sphere),
            "torus" => Ok(ShapeFamily::Torus),
            "box" => Ok(ShapeFamily::Box),
            other => Err(Error::Contract(format!("unknown shape family '{other}'"))),
        }
    }
}

/// Shape parameters in model units. A sphere with unequal radii is an
/// axis-aligned ellipsoid; the torus lies around the Y axis.
#[derive(Clone, Debug, PartialEq)]
pub enum ShapeParams {
    Sphere { radii: [f64; 3] },
    /// Tube of radial half-width `minor` and vertical half-height `height`
    /// (an elliptical cross-section unless the two are equal).
    Torus { major: f64, minor: f64, height: f64 },
    Box { extents: [f64; 3] },
}

impl ShapeParams {
    pub fn sphere(radius: f64) -> Self {
        ShapeParams::Sphere {
            radii: [radius; 3],
        }
    }

    pub fn family(&self) -> ShapeFamily {
        match self {
            ShapeParams::Sphere { .. } => ShapeFamily::Sphere,
            ShapeParams::Torus { .. } => ShapeFamily::Torus,
            ShapeParams::Box { .. } => ShapeFamily::Box,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ShapeParams::Sphere { radii } => radii.iter().all(|&r| r > 0.0 && r.is_finite()),
            ShapeParams::Torus { major, minor, height } => {
                *minor > 0.0 && minor < major && major.is_finite() && *height > 0.0 && height.is_finite()
            }
            ShapeParams::Box { extents } => extents.iter().all(|&e| e > 0.0 && e.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Geometry(format!("invalid shape parameters {self:?}")))
        }
    }

    /// Surface area of the smooth shape. Exact for spheres, tori and boxes;
    /// ellipsoids use Thomsen's approximation (relative error below 1.1%).
    pub fn analytic_area(&self) -> f64 {
        match self {
            ShapeParams::Sphere { radii: [a, b, c] } => {
                if a == b && b == c {
                    4.0 * PI * a * a
                } else {
                    let p = 1.6075;
                    let m = ((a * b).powf(p) + (a * c).powf(p) + (b * c).powf(p)) / 3.0;
                    4.0 * PI * m.powf(1.0 / p)
                }
            }
            // Pappus: the tube's centroid circle times its perimeter.
            ShapeParams::Torus { major, minor, height } => 2.0 * PI * major * ellipse_perimeter(*minor, *height),
            ShapeParams::Box { extents: [x, y, z] } => 2.0 * (x * y + y * z + x * z),
        }
    }
}

/// Watertight triangulation of a procedural shape. `resolution` is the number
/// of segments around the longest loop (longitude for spheres and tori, edge
/// subdivisions for boxes).
pub fn procedural_shape(params: &ShapeParams, resolution: usize) -> Result<TriangleMesh> {
    if resolution < 4 {
        return Err(Error::Geometry(format!("resolution {resolution} below 4")));
    }
    params.validate()?;
    match params {
        ShapeParams::Sphere { radii } => ellipsoid(*radii, resolution),
        ShapeParams::Torus { major, minor, height } => torus(*major, *minor, *height, resolution),
        ShapeParams::Box { extents } => cuboid(*extents, resolution),
    }
}

fn ellipsoid(radii: [f64; 3], resolution: usize) -> Result<TriangleMesh> {
    let slices = resolution;
    let stacks = (resolution / 2).max(2);
    let mut vertices = vec![Point::new(0.0, radii[1], 0.0)];
    for i in 1..stacks {
        let theta = PI * i as f64 / stacks as f64;
        let (st, ct) = theta.sin_cos();
        for j in 0..slices {
            let phi = 2.0 * PI * j as f64 / slices as f64;
            let (sp, cp) = phi.sin_cos();
            vertices.push(Point::new(radii[0] * st * cp, radii[1] * ct, radii[2] * st * sp));
        }
    }
    vertices.push(Point::new(0.0, -radii[1], 0.0));
    let south = vertices.len() - 1;
    let ring = |i: usize, j: usize| 1 + (i - 1) * slices + j % slices;
    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push([0, ring(1, j + 1), ring(1, j)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    for j in 0..slices {
        triangles.push([south, ring(stacks - 1, j), ring(stacks - 1, j + 1)]);
    }
    TriangleMesh::new(vertices, triangles)
}

/// Trapezoid rule on the periodic arc-length integrand, which converges
/// geometrically.
fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    const STEPS: usize = 4096;
    let h = 2.0 * PI / STEPS as f64;
    (0..STEPS)
        .map(|k| {
            let (s, c) = (k as f64 * h).sin_cos();
            (a * a * s * s + b * b * c * c).sqrt()
        })
        .sum::<f64>()
        * h
}

fn torus(major: f64, minor: f64, height: f64, resolution: usize) -> Result<TriangleMesh> {
    let around = resolution;
    let tube = (resolution / 2).max(3);
    let mut vertices = Vec::with_capacity(around * tube);
    for i in 0..around {
        let phi = 2.0 * PI * i as f64 / around as f64;
        let (sp, cp) = phi.sin_cos();
        for j in 0..tube {
            let theta = 2.0 * PI * j as f64 / tube as f64;
            let (st, ct) = theta.sin_cos();
            let r = major + minor * ct;
            vertices.push(Point::new(r * cp, height * st, r * sp));
        }
    }
    let idx = |i: usize, j: usize| (i % around) * tube + j % tube;
    let mut triangles = Vec::with_capacity(2 * around * tube);
    for i in 0..around {
        for j in 0..tube {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

fn cuboid(extents: [f64; 3], resolution: usize) -> Result<TriangleMesh> {
    let n = resolution;
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |l: [usize; 3]| -> usize {
        *index.entry(l).or_insert_with(|| {
            let p = Point::new(
                extents[0] * (l[0] as f64 / n as f64 - 0.5),
                extents[1] * (l[1] as f64 / n as f64 - 0.5),
                extents[2] * (l[2] as f64 / n as f64 - 0.5),
            );
            vertices.push(p);
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(12 * n * n);
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n] {
            for a in 0..n {
                for b in 0..n {
                    let at = |da: usize, db: usize| {
                        let mut l = [0; 3];
                        l[axis] = side;
                        l[u] = a + da;
                        l[v] = b + db;
                        l
                    };
                    let (p00, p10, p11, p01) =
                        (vertex(at(0, 0)), vertex(at(1, 0)), vertex(at(1, 1)), vertex(at(0, 1)));
                    if side == n {
                        triangles.push([p00, p10, p11]);
                        triangles.push([p00, p11, p01]);
                    } else {
                        triangles.push([p00, p11, p10]);
                        triangles.push([p00, p01, p11]);
                    }
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles)
}
