//! Dataset directories: one ASCII PLY mesh per shape plus a manifest with
//! `path family mesh_area analytic_area` rows (`-` for an unknown analytic
//! area). Paths are relative to the directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{atomic_write, parse_ply, read_mesh, read_text, render_ply_mesh};
use crate::error::{Error, Result};
use crate::geometry::{ShapeFamily, TriangleMesh};
use crate::training::{Dataset, ShapeRecord};

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub family: String,
    pub mesh_area: f64,
    pub analytic_area: Option<f64>,
}

/// Writes `count` randomized meshes per family into `dir` and returns the
/// manifest rows. The recorded mesh area is that of the mesh as stored.
pub fn generate_dataset(
    dir: &Path,
    families: &[ShapeFamily],
    count: usize,
    mesh_resolution: usize,
    seed: u64,
) -> Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data = Dataset::procedural(families, count, mesh_resolution, seed)?;
    let mut entries = Vec::with_capacity(data.len());
    let mut manifest = String::from("# path family mesh_area analytic_area\n");
    for shape in &data.shapes {
        let file = format!("{}.ply", shape.name);
        let text = render_ply_mesh(&shape.mesh);
        let stored = parse_ply(&text, &file)?;
        let stored = TriangleMesh::new(stored.vertices, stored.faces.iter().map(|f| [f[0], f[1], f[2]]).collect())?;
        atomic_write(&dir.join(&file), text.as_bytes())?;
        let entry = ManifestEntry {
            path: PathBuf::from(&file),
            family: shape.family.clone(),
            mesh_area: stored.area(),
            analytic_area: shape.analytic_area,
        };
        let analytic = entry.analytic_area.map_or("-".to_string(), |a| a.to_string());
        let _ = writeln!(manifest, "{} {} {} {}", file, entry.family, entry.mesh_area, analytic);
        entries.push(entry);
    }
    atomic_write(&dir.join(MANIFEST_NAME), manifest.as_bytes())?;
    Ok(entries)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_NAME);
    let text = read_text(&path)?;
    let ctx = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let [file, family, area, analytic] = tok[..] else {
            return Err(Error::parse(&ctx, i + 1, "expected 'path family mesh_area analytic_area'"));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(&ctx, i + 1, format!("bad number '{s}'")));
        out.push(ManifestEntry {
            path: PathBuf::from(file),
            family: family.to_string(),
            mesh_area: num(area)?,
            analytic_area: if analytic == "-" { None } else { Some(num(analytic)?) },
        });
    }
    Ok(out)
}

/// Loads every manifest mesh. Meshes must already lie inside `[-1, 1]³`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mut shapes = Vec::new();
    for entry in read_manifest(dir)? {
        let path = dir.join(&entry.path);
        let mesh = read_mesh(&path)?;
        let (lo, hi) = mesh.bounds();
        if lo.iter().chain(hi.iter()).any(|c| c.abs() > 1.0) {
            return Err(Error::Geometry(format!(
                "{} extends outside [-1, 1]^3; normalize it first",
                path.display()
            )));
        }
        let name = entry
            .path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("shape")
            .to_string();
        let mut rec = ShapeRecord::new(name, entry.family, mesh)?;
        rec.analytic_area = entry.analytic_area;
        shapes.push(rec);
    }
    if shapes.is_empty() {
        return Err(Error::Contract(format!("dataset {} lists no meshes", dir.display())));
    }
    Ok(Dataset::new(shapes))
}
