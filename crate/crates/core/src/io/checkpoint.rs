//! Binary checkpoint: `NSCK`, u32 version, u64-length-prefixed config text,
//! then a u64 tensor count and per tensor its name, rank, u64 extents and
//! raw f64 values. Everything little-endian.

use std::path::Path;

use super::atomic_write;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Run configuration text the parameters were trained with.
    pub config: String,
    pub params: ModelParams,
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

pub fn write_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_str(&mut out, &ck.config);
    put_u64(&mut out, ck.params.len() as u64);
    for p in ck.params.iter() {
        put_str(&mut out, &p.name);
        put_u64(&mut out, p.value.rank() as u64);
        for &e in p.value.shape() {
            put_u64(&mut out, e as u64);
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("implausible {what} {v}")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.len(what)?;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad magic (not a checkpoint)".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config = r.string("config")?;
    let count = r.len("tensor count")?;
    let mut params = ModelParams::new();
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let rank = r.len("rank")?;
        let shape = (0..rank).map(|_| r.len("extent")).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &e| a.checked_mul(e))
            .filter(|&n| n <= bytes.len() / 8)
            .ok_or_else(|| Error::Format(format!("tensor '{name}' extents {shape:?} overflow")))?;
        let raw = r.take(n * 8, "tensor data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params
            .insert(&name, Tensor::new(shape, data)?)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { config, params })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    atomic_write(path, &write_checkpoint(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ModelParams::new();
        params
            .insert("encoder.a", Tensor::new(vec![2, 1], vec![f64::MIN_POSITIVE, -0.0]).unwrap())
            .unwrap();
        params.insert("sampler.b", Tensor::scalar(1.0 / 3.0)).unwrap();
        Checkpoint {
            config: "epochs = 3\n".into(),
            params,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = write_checkpoint(&ck);
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(write_checkpoint(&back), bytes);
    }

    #[test]
    fn version_and_truncation_errors() {
        let mut bytes = write_checkpoint(&sample());
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes[4] = 9;
        let err = read_checkpoint(&bytes).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");
    }
}
