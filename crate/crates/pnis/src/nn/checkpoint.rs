//! Checkpoint container: JSON manifest + flat little-endian f64 blob.
//!
//! Layout: magic "PNCK", version u16 LE, manifest length u32 LE, manifest
//! JSON, then all tensor data back to back. The manifest records name, shape,
//! dtype, and byte offset/element count per tensor plus an `extra` JSON value
//! for whatever the owning model wants to persist (config, normalization,
//! training metadata). Writes are deterministic: tensor order is the caller's
//! list order and the JSON map is sorted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"PNCK";
pub const VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u16),
    #[error("checkpoint corrupt: {0}")]
    Corrupt(String),
    #[error("tensor {name}: expected shape {expected:?}, checkpoint has {got:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("tensor {0} missing from checkpoint")]
    Missing(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the blob.
    pub offset: u64,
    /// Element count.
    pub len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tensors: Vec<TensorMeta>,
    pub extra: serde_json::Value,
}

pub fn save(
    path: &Path,
    tensors: &[(String, &Tensor)],
    extra: &serde_json::Value,
) -> Result<(), CheckpointError> {
    let mut metas = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in tensors {
        metas.push(TensorMeta {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: "f64".into(),
            offset,
            len: t.numel() as u64,
        });
        offset += 8 * t.numel() as u64;
    }
    let manifest = Manifest { tensors: metas, extra: extra.clone() };
    let manifest_bytes = serde_json::to_vec(&manifest)?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(manifest_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&manifest_bytes)?;
    for (_, t) in tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads manifest and tensors; tensors come back in manifest order.
pub fn load(path: &Path) -> Result<(Manifest, Vec<Tensor>), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let mlen = u32::from_le_bytes(buf4) as usize;
    let mut mbytes = vec![0u8; mlen];
    r.read_exact(&mut mbytes)?;
    let manifest: Manifest = serde_json::from_slice(&mbytes)?;

    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for meta in &manifest.tensors {
        if meta.dtype != "f64" {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {}: dtype {} unsupported",
                meta.name, meta.dtype
            )));
        }
        let numel: usize = meta.shape.iter().product();
        if numel as u64 != meta.len {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {}: shape {:?} vs len {}",
                meta.name, meta.shape, meta.len
            )));
        }
        let start = meta.offset as usize;
        let end = start + 8 * numel;
        if end > blob.len() {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {}: blob range {}..{} out of {} bytes",
                meta.name,
                start,
                end,
                blob.len()
            )));
        }
        let data: Vec<f64> = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(
            Tensor::from_vec(&meta.shape, data)
                .map_err(|e| CheckpointError::Corrupt(e.to_string()))?,
        );
    }
    Ok((manifest, tensors))
}
