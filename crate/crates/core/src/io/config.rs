//! `key = value` run configuration. Unknown keys are rejected; missing keys
//! keep their defaults. `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use super::read_text;
use crate::error::{Error, Result};
use crate::metrics::NucConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub nuc: NucConfig,
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub const KEYS: [&'static str; 20] = [
        "epochs",
        "learning_rate",
        "batch_size",
        "samplings_per_surface",
        "input_points",
        "seed",
        "optimizer",
        "resolution",
        "point_widths",
        "fine_blocks",
        "coarse_blocks",
        "latent_dim",
        "feature_channels",
        "sampler_hidden",
        "w_chamfer",
        "w_bce",
        "w_consistency",
        "nuc_disks",
        "nuc_fractions",
        "nuc_seed",
    ];

    pub fn serialize(&self) -> String {
        let t = &self.train;
        let m = &t.model;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("epochs", t.epochs.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("samplings_per_surface", t.samplings_per_surface.to_string());
        kv("input_points", t.input_points.to_string());
        kv("seed", t.seed.to_string());
        kv("optimizer", t.optimizer.to_string());
        kv("resolution", m.resolution.to_string());
        kv("point_widths", list(&m.point_widths));
        kv("fine_blocks", m.fine_blocks.to_string());
        kv("coarse_blocks", m.coarse_blocks.to_string());
        kv("latent_dim", m.latent_dim.to_string());
        kv("feature_channels", m.feature_channels.to_string());
        kv("sampler_hidden", m.sampler_hidden.to_string());
        kv("w_chamfer", t.weights.chamfer.to_string());
        kv("w_bce", t.weights.bce.to_string());
        kv("w_consistency", t.weights.consistency.to_string());
        kv("nuc_disks", self.nuc.disk_count.to_string());
        kv("nuc_fractions", list(&self.nuc.area_fractions));
        kv("nuc_seed", self.nuc.seed.to_string());
        s
    }

    pub fn parse(text: &str, ctx: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(ctx, n, format!("expected 'key = value', got '{line}'")))?;
            let err = |m: String| Error::parse(ctx, n, format!("key '{key}': {m}"));
            let key = *Self::KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| err("unknown key".into()))?;
            if seen.contains(&key) {
                return Err(err("duplicate key".into()));
            }
            seen.push(key);
            fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
            where
                T::Err: std::fmt::Display,
            {
                v.parse::<T>().map_err(|e| format!("'{v}': {e}"))
            }
            fn nums<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String>
            where
                T::Err: std::fmt::Display,
            {
                v.split(',').map(|p| num(p.trim())).collect()
            }
            let t = &mut c.train;
            let r: Result<(), String> = (|| {
                match key {
                    "epochs" => t.epochs = num(value)?,
                    "learning_rate" => t.learning_rate = num(value)?,
                    "batch_size" => t.batch_size = num(value)?,
                    "samplings_per_surface" => t.samplings_per_surface = num(value)?,
                    "input_points" => t.input_points = num(value)?,
                    "seed" => t.seed = num(value)?,
                    "optimizer" => t.optimizer = value.parse().map_err(|e: Error| e.to_string())?,
                    "resolution" => t.model.resolution = num(value)?,
                    "point_widths" => t.model.point_widths = nums(value)?,
                    "fine_blocks" => t.model.fine_blocks = num(value)?,
                    "coarse_blocks" => t.model.coarse_blocks = num(value)?,
                    "latent_dim" => t.model.latent_dim = num(value)?,
                    "feature_channels" => t.model.feature_channels = num(value)?,
                    "sampler_hidden" => t.model.sampler_hidden = num(value)?,
                    "w_chamfer" => t.weights.chamfer = num(value)?,
                    "w_bce" => t.weights.bce = num(value)?,
                    "w_consistency" => t.weights.consistency = num(value)?,
                    "nuc_disks" => c.nuc.disk_count = num(value)?,
                    "nuc_fractions" => c.nuc.area_fractions = nums(value)?,
                    "nuc_seed" => c.nuc.seed = num(value)?,
                    _ => unreachable!("key list is exhaustive"),
                }
                Ok(())
            })();
            r.map_err(err)?;
        }
        c.validate().map_err(|e| Error::parse(ctx, 0, e.to_string()))?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.nuc.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.train.learning_rate = 0.1 + 0.2;
        c.train.model.point_widths = vec![8, 24];
        c.nuc.area_fractions = vec![0.003];
        let text = c.serialize();
        assert_eq!(RunConfig::parse(&text, "t").unwrap(), c);
        assert_eq!(text.lines().count(), RunConfig::KEYS.len());
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = RunConfig::parse("epochs = 2\n\nbogus = 1\n", "cfg").unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("bogus"), "{e}");
        let e = RunConfig::parse("# c\nbatch_size = many\n", "cfg").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("batch_size"), "{e}");
        assert!(RunConfig::parse("batch_size = 7\n", "cfg").is_err());
    }
}
