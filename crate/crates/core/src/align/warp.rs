use crate::error::Result;
use crate::image::Image;

use super::AffineTransform;

/// Bilinear sample at continuous `(x, y)`; neighbours outside the image count as 0.
#[inline]
pub fn sample_bilinear(img: &Image, x: f64, y: f64) -> f32 {
    let (h, w) = (img.height() as isize, img.width() as isize);
    if !(x > -1.0 && y > -1.0 && x < w as f64 && y < h as f64) {
        return 0.0;
    }
    let (x0f, y0f) = (libm::floor(x), libm::floor(y));
    let (fx, fy) = ((x - x0f) as f32, (y - y0f) as f32);
    let (x0, y0) = (x0f as isize, y0f as isize);
    let px = |yy: isize, xx: isize| -> f32 {
        if yy >= 0 && xx >= 0 && yy < h && xx < w {
            img.get(yy as usize, xx as usize)
        } else {
            0.0
        }
    };
    let top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1) * fx;
    let bottom = px(y0 + 1, x0) * (1.0 - fx) + px(y0 + 1, x0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Inverse-mapping warp: output pixel `p` takes `source(t(p))`.
pub fn affine_warp(source: &Image, t: &AffineTransform, out_height: usize, out_width: usize) -> Result<Image> {
    t.inverse()?;
    Ok(Image::from_fn(out_height, out_width, |y, x| {
        let (xs, ys) = t.apply(x as f64, y as f64);
        sample_bilinear(source, xs, ys)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn ramp() -> Image {
        Image::from_fn(5, 7, |y, x| (y * 7 + x) as f32 / 35.0)
    }

    #[test]
    fn identity_is_exact() {
        let img = ramp();
        assert_eq!(affine_warp(&img, &AffineTransform::IDENTITY, 5, 7).unwrap(), img);
    }

    #[test]
    fn integer_translation_moves_hot_pixel() {
        let mut img = Image::zeros(5, 9);
        img.set(2, 6, 1.0);
        let out = affine_warp(&img, &AffineTransform::translation(2.0, 0.0), 5, 9).unwrap();
        // output (y, x) reads source (y, x + 2)
        let hot: Vec<_> = (0..5).flat_map(|y| (0..9).map(move |x| (y, x))).filter(|&(y, x)| out.get(y, x) != 0.0).collect();
        assert_eq!(hot, [(2, 4)]);
        assert_eq!(out.get(2, 4), 1.0);
    }

    #[test]
    fn off_image_is_zero() {
        let out = affine_warp(&ramp(), &AffineTransform::translation(100.0, -50.0), 5, 7).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_transform_rejected() {
        let t = AffineTransform { a11: 1.0, a12: 2.0, a21: 0.5, a22: 1.0, tx: 0.0, ty: 0.0 };
        assert!(affine_warp(&ramp(), &t, 5, 7).is_err());
    }
}
