//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 numeric failure. Diagnostics go to stderr; stdout carries data
//! only when an output path is `-`.

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::geometry::{point_to_mesh_distance, ShapeFamily};
use crate::io::{
    atomic_write, generate_dataset, load_checkpoint, load_dataset, read_cloud, read_latent, read_mesh, render_report,
    render_table, save_checkpoint, write_cloud, write_latent, Checkpoint, ReportValue, RunConfig,
};
use crate::losses::{chamfer, mean_chamfer};
use crate::metrics::{nuc, NucConfig};
use crate::model::{Model, ParamGroup};
use crate::training::{train, MESH_RESOLUTION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gridsampler", version, about = "Voxel-grid point cloud auto-encoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Procedural mesh datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train from a config file and a dataset directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Start from this checkpoint's parameters instead of a fresh network.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Encode a point cloud into a latent code (one value per line).
    Encode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode and sample clouds along the segment between two latent codes.
    Interpolate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        passes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Encode a cloud and regenerate it with several sampling passes.
    Upsample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        passes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluation metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Write randomized meshes and a manifest.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "sphere,torus,box")]
        families: Vec<ShapeFamily>,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = MESH_RESOLUTION)]
        mesh_resolution: usize,
    },
}

#[derive(Debug, Args)]
pub struct ReportOut {
    /// Key/value report destination (`-` for stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Chamfer distance between two clouds.
    Chamfer {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Point-to-mesh distance statistics.
    Distance {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[command(flatten)]
        report: ReportOut,
    },
    /// Normalized uniformity coefficient over matching cloud/mesh pairs.
    Nuc {
        #[arg(long, required = true)]
        cloud: Vec<PathBuf>,
        #[arg(long, required = true)]
        mesh: Vec<PathBuf>,
        #[arg(long, default_value_t = 9000)]
        disks: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.002,0.004,0.006,0.008,0.01,0.012")]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        report: ReportOut,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_DATA
    }
}

fn load_model(path: &Path) -> Result<(Model, RunConfig)> {
    let ck = load_checkpoint(path)?;
    let cfg = RunConfig::parse(&ck.config, &format!("{} (embedded config)", path.display()))?;
    let model = Model::from_params(cfg.train.model.clone(), ck.params)?;
    Ok((model, cfg))
}

fn emit_report(out: &Option<PathBuf>, entries: &[(String, ReportValue)]) -> Result<()> {
    let rows: Vec<Vec<String>> = entries.iter().map(|(k, v)| vec![k.clone(), v.to_string()]).collect();
    eprint!("{}", render_table(&["metric", "value"], &rows));
    match out {
        Some(p) => atomic_write(p, render_report(entries).as_bytes()),
        None => Ok(()),
    }
}

fn kv(k: &str, v: impl Into<ReportValue>) -> (String, ReportValue) {
    (k.to_string(), v.into())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Dataset(DatasetCommand::Gen {
            out,
            families,
            count,
            seed,
            mesh_resolution,
        }) => {
            let entries = generate_dataset(&out, &families, count, mesh_resolution, seed)?;
            eprintln!("wrote {} meshes to {}", entries.len(), out.display());
            Ok(())
        }
        Command::Train {
            config,
            data,
            out,
            resume,
        } => run_train(&config, &data, &out, resume.as_deref()),
        Command::Encode { ckpt, input, out } => {
            let (model, _) = load_model(&ckpt)?;
            let z = model.encode(&read_cloud(&input)?)?;
            write_latent(&out, &z)
        }
        Command::Interpolate {
            ckpt,
            a,
            b,
            steps,
            out,
            passes,
            seed,
        } => {
            let (model, _) = load_model(&ckpt)?;
            let (za, zb) = (read_latent(&a)?, read_latent(&b)?);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for i in 0..steps {
                let w = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
                let z = za.lerp(&zb, w)?;
                let cloud = model.sample_cloud(&z, passes as usize, seed)?;
                write_cloud(&out.join(format!("interp_{i:03}.ply")), &cloud)?;
            }
            Ok(())
        }
        Command::Upsample {
            ckpt,
            input,
            passes,
            seed,
            out,
        } => {
            let (model, _) = load_model(&ckpt)?;
            let cloud = read_cloud(&input)?;
            let z = model.encode(&cloud)?;
            let dense = model.sample_cloud(&z, passes as usize, seed)?;
            eprintln!("{} input points -> {} output points", cloud.len(), dense.len());
            write_cloud(&out, &dense)
        }
        Command::Eval(EvalCommand::Chamfer { a, b, report }) => {
            let (x, y) = (read_cloud(&a)?, read_cloud(&b)?);
            emit_report(
                &report.out,
                &[
                    kv("chamfer_sum", chamfer(&x, &y)?),
                    kv("chamfer_mean", mean_chamfer(&x, &y)?),
                    kv("points_a", x.len()),
                    kv("points_b", y.len()),
                ],
            )
        }
        Command::Eval(EvalCommand::Distance { cloud, mesh, report }) => {
            let stats = point_to_mesh_distance(&read_cloud(&cloud)?, &read_mesh(&mesh)?)?;
            emit_report(
                &report.out,
                &[kv("distance_mean", stats.mean), kv("distance_std", stats.std)],
            )
        }
        Command::Eval(EvalCommand::Nuc {
            cloud,
            mesh,
            disks,
            fractions,
            seed,
            report,
        }) => {
            if cloud.len() != mesh.len() {
                return Err(Error::Contract(format!(
                    "{} --cloud against {} --mesh arguments",
                    cloud.len(),
                    mesh.len()
                )));
            }
            let clouds = cloud.iter().map(|p| read_cloud(p)).collect::<Result<Vec<_>>>()?;
            let meshes = mesh.iter().map(|p| read_mesh(p)).collect::<Result<Vec<_>>>()?;
            let cfg = NucConfig {
                disk_count: disks,
                area_fractions: fractions,
                seed,
            };
            let mut entries = Vec::new();
            for r in nuc(&clouds, &meshes, &cfg)? {
                entries.push(kv(&format!("avg_p{}", r.area_fraction), r.avg));
                entries.push(kv(&format!("nuc_p{}", r.area_fraction), r.nuc));
            }
            emit_report(&report.out, &entries)
        }
    }
}

fn run_train(config: &Path, data: &Path, out: &Path, resume: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let dataset = load_dataset(data)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let init = match resume {
        Some(p) => {
            let (m, _) = load_model(p)?;
            if m.config() != &cfg.train.model {
                return Err(Error::Contract(format!(
                    "checkpoint {} was trained with a different architecture",
                    p.display()
                )));
            }
            Some(m)
        }
        None => None,
    };
    let config_text = cfg.serialize();
    let curve_path = out.join("learning_curve.txt");
    let mut curve = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&curve_path)
        .map_err(|e| Error::io(&curve_path, e))?;
    let outcome = train(&dataset, &cfg.train, init, |report, model| {
        writeln!(curve, "{}", report.log_line()).map_err(|e| Error::io(&curve_path, e))?;
        save_checkpoint(
            &out.join(format!("epoch_{}.nsck", report.epoch)),
            &Checkpoint {
                config: config_text.clone(),
                params: model.params().clone(),
            },
        )
    })?;
    let last = outcome.curve.last().expect("at least one epoch");
    let m = &outcome.model;
    let entries = [
        kv("epochs", outcome.curve.len()),
        kv("shapes", dataset.len()),
        kv("chamfer", last.losses.chamfer),
        kv("bce", last.losses.bce),
        kv("consistency", last.losses.consistency),
        kv("total", last.losses.total),
        kv("params_encoder", m.parameter_count(ParamGroup::Encoder)),
        kv("params_decoder_total", m.parameter_count(ParamGroup::DecoderTotal)),
    ];
    emit_report(&Some(out.join("report.txt")), &entries)
}
