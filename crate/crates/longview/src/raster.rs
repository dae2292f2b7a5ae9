//! `LVIM` single-channel rasters: magic, `u16` version, `u32` height and
//! width, then row-major `f32` samples in `[0, 1]`, all little-endian.

use std::path::Path;

use longview_core::image::Image;

use crate::bytes::{put_f32s, Reader};
use crate::error::{self, Error, Result};

pub const RASTER_MAGIC: &[u8; 4] = b"LVIM";
pub const RASTER_VERSION: u16 = 1;

pub fn encode_raster(image: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + 4 * image.data().len());
    out.extend_from_slice(RASTER_MAGIC);
    out.extend_from_slice(&RASTER_VERSION.to_le_bytes());
    out.extend_from_slice(&(image.height() as u32).to_le_bytes());
    out.extend_from_slice(&(image.width() as u32).to_le_bytes());
    put_f32s(&mut out, image.data());
    out
}

/// Decode raster bytes; `path` is only used in error messages.
pub fn decode_raster(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut r = Reader::new(bytes, path);
    r.magic(RASTER_MAGIC)?;
    let version = r.u16("version")?;
    if version != RASTER_VERSION {
        return Err(Error::format(path, format!("unsupported raster version {version}, expected {RASTER_VERSION}")));
    }
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let n = h.checked_mul(w).ok_or_else(|| Error::format(path, "raster dimensions overflow"))?;
    let data = r.f32s(n, "pixel data")?;
    r.finish()?;
    if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::format(path, format!("pixel value {v} outside [0, 1]")));
    }
    Image::new(h, w, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_raster(path: &Path, image: &Image) -> Result<()> {
    if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::format(path, format!("pixel value {v} outside [0, 1]")));
    }
    error::write(path, &encode_raster(image))
}

pub fn read_raster(path: &Path) -> Result<Image> {
    decode_raster(&error::read(path)?, path)
}
