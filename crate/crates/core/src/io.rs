//! Flat binary tensor container and checkpoint files.
//!
//! A tensor record is: magic `RGT1`, a dtype code byte (0 = f32, 1 = f64),
//! a rank byte, `rank` little-endian u64 dims, then the row-major payload in
//! little-endian order. The in-memory engine is f64; the dtype only chooses
//! the on-disk precision.
//!
//! A checkpoint is one file: a little-endian u64 manifest length, a JSON
//! manifest `{"config": ..., "params": [names...]}`, then one tensor record
//! per listed name, in order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Parameter;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"RGT1";
/// Upper bound on elements in one record; rejects corrupt headers before
/// they turn into giant allocations.
const MAX_NUMEL: u64 = 1 << 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(Error::Serde(format!("unknown dtype code {other}"))),
        }
    }
}

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor, dtype: Dtype) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[dtype.code(), t.rank() as u8])?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    match dtype {
        Dtype::F32 => {
            for &v in t.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Dtype::F64 => {
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Serde(format!(
            "bad magic {:?}; expected \"RGT1\"",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut head = [0u8; 2];
    r.read_exact(&mut head)?;
    let dtype = Dtype::from_code(head[0])?;
    let rank = head[1] as usize;
    let mut shape = Vec::with_capacity(rank);
    let mut numel: u64 = 1;
    for _ in 0..rank {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let d = u64::from_le_bytes(b);
        numel = numel.saturating_mul(d.max(1));
        shape.push(d as usize);
    }
    if numel > MAX_NUMEL {
        return Err(Error::Serde(format!("tensor header claims {numel} elements")));
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    match dtype {
        Dtype::F32 => {
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf)?;
            for c in buf.chunks_exact(4) {
                data.push(f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64);
            }
        }
        Dtype::F64 => {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            for c in buf.chunks_exact(8) {
                data.push(f64::from_le_bytes(c.try_into().expect("chunk of 8")));
            }
        }
    }
    Tensor::from_vec(&shape, data)
}

pub fn save_tensor(path: &Path, t: &Tensor, dtype: Dtype) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t, dtype)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    read_tensor(&mut BufReader::new(File::open(path)?))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    config: serde_json::Value,
    params: Vec<String>,
}

/// A checkpoint read back from disk: the config it was trained with and the
/// named tensors in file order.
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Copy stored tensors into matching parameters by name. Every parameter
    /// must be present; extra stored tensors are an error too, so a config /
    /// architecture mismatch cannot pass silently.
    pub fn load_into(&self, params: &[&Parameter]) -> Result<()> {
        if params.len() != self.entries.len() {
            return Err(Error::Serde(format!(
                "checkpoint has {} tensors, model has {} parameters",
                self.entries.len(),
                params.len()
            )));
        }
        for p in params {
            let (_, t) = self
                .entries
                .iter()
                .find(|(name, _)| name == p.name())
                .ok_or_else(|| Error::Serde(format!("checkpoint missing parameter {}", p.name())))?;
            p.load(t)?;
        }
        Ok(())
    }
}

pub fn save_checkpoint(
    path: &Path,
    config: &serde_json::Value,
    params: &[&Parameter],
    dtype: Dtype,
) -> Result<()> {
    let manifest = Manifest {
        config: config.clone(),
        params: params.iter().map(|p| p.name().to_string()).collect(),
    };
    let mbytes = serde_json::to_vec(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(mbytes.len() as u64).to_le_bytes())?;
    w.write_all(&mbytes)?;
    for p in params {
        write_tensor(&mut w, &p.value(), dtype)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)?;
    let mlen = u64::from_le_bytes(len8);
    if mlen > (1 << 26) {
        return Err(Error::Serde(format!("manifest length {mlen} is implausible")));
    }
    let mut mbytes = vec![0u8; mlen as usize];
    r.read_exact(&mut mbytes)?;
    let manifest: Manifest =
        serde_json::from_slice(&mbytes).map_err(|e| Error::Serde(e.to_string()))?;
    let mut entries = Vec::with_capacity(manifest.params.len());
    for name in manifest.params {
        entries.push((name, read_tensor(&mut r)?));
    }
    Ok(Checkpoint {
        config: manifest.config,
        entries,
    })
}
