use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::image::{BinaryMask, Image};

/// Pixels with value strictly above `eps`.
pub fn nonzero_mask(image: &Image, eps: f64) -> BinaryMask {
    let bits: Vec<bool> = image.data().iter().map(|&v| v as f64 > eps).collect();
    BinaryMask::new(image.height(), image.width(), bits).expect("mask matches image dims")
}

/// `|a ∩ b| / |a ∪ b|`, or 1 when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(shape_err!("mask_iou on {:?} and {:?}", a.dims(), b.dims()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
