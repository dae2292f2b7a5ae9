//! Textured ellipse phantoms and bounded random affines for registration tests.

use crate::image::Image;
use crate::rng::Rng;

use super::AffineTransform;
use rand::Rng as _;

/// Bounds of a random registration error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineBounds {
    pub max_rotation_deg: f64,
    pub scale: (f64, f64),
    /// Fraction of the image width.
    pub max_translation: f64,
}

impl Default for AffineBounds {
    /// Rotation ≤ 15°, scale in [0.9, 1.1], translation ≤ 8 % of the width.
    fn default() -> Self {
        AffineBounds { max_rotation_deg: 15.0, scale: (0.9, 1.1), max_translation: 0.08 }
    }
}

/// A rotated ellipse filling roughly half of an `h × w` frame, with smooth
/// shading and a few bright blobs so intensity correlation has structure.
pub fn ellipse_phantom(h: usize, w: usize, rng: &mut Rng) -> Image {
    let (hf, wf) = (h as f64, w as f64);
    let cx = wf * rng.gen_range(0.42..0.58);
    let cy = hf * rng.gen_range(0.42..0.58);
    let rx = wf * rng.gen_range(0.22..0.32);
    let ry = hf * rng.gen_range(0.18..0.28);
    let (s, c) = libm::sincos(rng.gen_range(-0.6..0.6));
    let blobs: [(f64, f64, f64, f64); 4] = core::array::from_fn(|_| {
        let (u, v) = (rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
        (cx + rx * u, cy + ry * v, rng.gen_range(2.0..5.0), rng.gen_range(0.15..0.35))
    });
    let slope = rng.gen_range(-0.2..0.2);
    Image::from_fn(h, w, |y, x| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let (u, v) = ((c * dx + s * dy) / rx, (-s * dx + c * dy) / ry);
        let r2 = u * u + v * v;
        if r2 > 1.0 {
            return 0.0;
        }
        let mut val = 0.35 + 0.15 * (1.0 - r2) + slope * u;
        for &(bx, by, br, ba) in &blobs {
            let (ex, ey) = (x as f64 - bx, y as f64 - by);
            let d2 = (ex * ex + ey * ey) / (br * br);
            val += ba * libm::exp(-d2);
        }
        val.clamp(0.05, 1.0) as f32
    })
}

/// A similarity transform about the frame center drawn uniformly within `bounds`.
pub fn random_affine(rng: &mut Rng, h: usize, w: usize, bounds: &AffineBounds) -> AffineTransform {
    let r = bounds.max_rotation_deg.to_radians();
    let angle = if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
    let scale = if bounds.scale.1 > bounds.scale.0 { rng.gen_range(bounds.scale.0..=bounds.scale.1) } else { bounds.scale.0 };
    let m = bounds.max_translation * w as f64;
    let (dx, dy) = if m > 0.0 { (rng.gen_range(-m..=m), rng.gen_range(-m..=m)) } else { (0.0, 0.0) };
    AffineTransform::similarity_about(angle, scale, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, dx, dy)
}
