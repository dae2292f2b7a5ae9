//! `LVCK` checkpoints: magic, `u16` version, `u32` length plus a JSON
//! configuration blob, `u32` parameter count, then per parameter a `u16`
//! name length, the UTF-8 name, a dtype byte (0 = f32), a rank byte, `u32`
//! dimensions and the raw values, all little-endian.

use std::path::Path;

use longview_core::tensor::{Scalar, Tensor};
use longview_core::train::{Checkpoint, CheckpointMeta};

use crate::bytes::{put_f32s, Reader};
use crate::error::{self, Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LVCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let blob = serde_json::to_vec(&ckpt.meta).map_err(|e| Error::Usage(format!("checkpoint config: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
    out.extend_from_slice(&blob);
    out.extend_from_slice(&(ckpt.params.len() as u32).to_le_bytes());
    for (name, t) in &ckpt.params {
        let name_len = u16::try_from(name.len()).map_err(|_| Error::Usage(format!("parameter name too long: {name}")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(<f32 as Scalar>::DTYPE);
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        put_f32s(&mut out, t.data());
    }
    Ok(out)
}

/// Decode checkpoint bytes; `path` is only used in error messages.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes, path);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let blob_len = r.u32("config length")? as usize;
    let blob = r.take(blob_len, "config")?;
    let meta: CheckpointMeta = serde_json::from_slice(blob).map_err(|e| Error::format(path, format!("config: {e}")))?;
    let count = r.u32("parameter count")? as usize;
    let mut params = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let name_len = r.u16("parameter name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "parameter name")?)
            .map_err(|_| Error::format(path, format!("parameter {i}: name is not UTF-8")))?
            .to_string();
        let dtype = r.u8("dtype")?;
        if dtype != <f32 as Scalar>::DTYPE {
            return Err(Error::format(path, format!("parameter {name}: unsupported dtype {dtype}")));
        }
        let rank = r.u8("rank")? as usize;
        let shape = (0..rank).map(|_| r.u32("dimension").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::format(path, "shape overflows"))?;
        let data = r.f32s(n, "parameter data")?;
        let t = Tensor::new(&shape, data).map_err(|e| Error::format(path, format!("parameter {name}: {e}")))?;
        params.push((name, t));
    }
    r.finish()?;
    Ok(Checkpoint { meta, params })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    error::write(path, &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&error::read(path)?, path)
}
