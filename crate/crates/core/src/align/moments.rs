use crate::error::{Error, Result};
use crate::image::Image;

use super::{nonzero_mask, AffineTransform};

/// Centroid and covariance of a mask's pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskMoments {
    pub count: usize,
    pub cx: f64,
    pub cy: f64,
    /// `[[σxx, σxy], [σxy, σyy]]`
    pub cov: [[f64; 2]; 2],
}

pub fn mask_moments(image: &Image, eps: f64) -> Result<MaskMoments> {
    let mask = nonzero_mask(image, eps);
    let (h, w) = mask.dims();
    let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) {
                n += 1;
                sx += x as f64;
                sy += y as f64;
            }
        }
    }
    if n == 0 {
        return Err(Error::Degenerate("empty foreground mask".into()));
    }
    let (cx, cy) = (sx / n as f64, sy / n as f64);
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                xx += dx * dx;
                xy += dx * dy;
                yy += dy * dy;
            }
        }
    }
    // uniform pixel footprint: each pixel carries 1/12 variance per axis
    let nf = n as f64;
    let cov = [[xx / nf + 1.0 / 12.0, xy / nf], [xy / nf, yy / nf + 1.0 / 12.0]];
    Ok(MaskMoments { count: n, cx, cy, cov })
}

type Mat = [[f64; 2]; 2];

fn mul(a: &Mat, b: &Mat) -> Mat {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn transpose(a: &Mat) -> Mat {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// Eigenvalues (descending) and unit eigenvectors (columns) of a symmetric 2×2 matrix.
fn sym_eigen(m: &Mat) -> ((f64, f64), Mat) {
    let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
    let half_tr = (a + c) / 2.0;
    let r = libm::hypot((a - c) / 2.0, b);
    let (l1, l2) = (half_tr + r, half_tr - r);
    let theta = 0.5 * libm::atan2(2.0 * b, a - c);
    let (s, co) = libm::sincos(theta);
    ((l1, l2), [[co, -s], [s, co]])
}

/// Moment-matching affine estimate.
///
/// Maps the target mask's centroid onto the source centroid and its
/// covariance ellipse onto the source ellipse: `A Σt Aᵀ = Σs`. Of the
/// orientation-preserving solutions aligning principal axes, the one with
/// the smallest rotation is returned.
pub fn estimate_affine_moments(source: &Image, target: &Image, eps: f64) -> Result<AffineTransform> {
    let ms = mask_moments(source, eps)?;
    let mt = mask_moments(target, eps)?;
    let ((s1, s2), us) = sym_eigen(&ms.cov);
    let ((t1, t2), ut) = sym_eigen(&mt.cov);
    if !(s2 > 0.0 && t2 > 0.0) {
        return Err(Error::Degenerate("foreground has zero spread".into()));
    }
    let scale = [[libm::sqrt(s1 / t1), 0.0], [0.0, libm::sqrt(s2 / t2)]];
    let stretch = mul(&mul(&us, &scale), &transpose(&us));
    let ut_t = transpose(&ut);

    // Axis directions are meaningless for near-circular spreads.
    const ISOTROPY: f64 = 1.05;
    let rotation = if s1 / s2 < ISOTROPY || t1 / t2 < ISOTROPY {
        None
    } else {
        let mut best: Option<(f64, Mat)> = None;
        for flip in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
            let p = [[flip[0], 0.0], [0.0, flip[1]]];
            let q = mul(&mul(&us, &p), &ut_t);
            let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
            if det <= 0.0 {
                continue;
            }
            let trace = q[0][0] + q[1][1];
            if best.as_ref().is_none_or(|(t, _)| trace > *t) {
                best = Some((trace, q));
            }
        }
        best.map(|(_, q)| q)
    };
    let linear = match rotation {
        // stretch · Q, with Q = Us P Utᵀ, equals Us S P Utᵀ
        Some(q) => mul(&stretch, &q),
        None => mul(&sym_sqrt(&ms.cov), &sym_inv(&sym_sqrt(&mt.cov))),
    };
    let t = AffineTransform {
        a11: linear[0][0],
        a12: linear[0][1],
        a21: linear[1][0],
        a22: linear[1][1],
        tx: ms.cx - (linear[0][0] * mt.cx + linear[0][1] * mt.cy),
        ty: ms.cy - (linear[1][0] * mt.cx + linear[1][1] * mt.cy),
    };
    if t.is_plausible() {
        Ok(t)
    } else {
        Ok(AffineTransform::translation(ms.cx - mt.cx, ms.cy - mt.cy))
    }
}

/// Principal square root of a symmetric positive definite 2×2 matrix.
fn sym_sqrt(m: &Mat) -> Mat {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let sd = libm::sqrt(det);
    let norm = libm::sqrt(m[0][0] + m[1][1] + 2.0 * sd);
    [[(m[0][0] + sd) / norm, m[0][1] / norm], [m[1][0] / norm, (m[1][1] + sd) / norm]]
}

fn sym_inv(m: &Mat) -> Mat {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}
