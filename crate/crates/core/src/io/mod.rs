//! On-disk formats: ASCII clouds and meshes, latent codes, binary
//! checkpoints, run configuration, datasets and metric reports.
//!
//! Every writer goes through [`atomic_write`], which writes a sibling temp
//! file and renames it over the destination.

mod checkpoint;
mod config;
mod dataset;
mod mesh;
mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::RunConfig;
pub use dataset::{generate_dataset, load_dataset, read_manifest, ManifestEntry, MANIFEST_NAME};
pub use mesh::{
    format_g, parse_latent, parse_off, parse_ply, parse_xyz, read_cloud, read_latent, read_mesh, render_latent,
    render_ply_cloud, render_ply_mesh, render_xyz, write_cloud, write_latent, PlyData,
};
pub use report::{render_report, render_table, ReportValue};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Replaces `path` with `bytes` via write-then-rename, so readers never see a
/// partially written file. `-` writes to stdout.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if path == Path::new("-") {
        let mut out = std::io::stdout().lock();
        return out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| Error::io(path, e));
    }
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
