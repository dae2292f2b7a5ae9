use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Output-to-source map `(xs, ys) = A·(xt, yt) + t` in pixel-center coordinates
/// (`x` = column, `y` = row).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub tx: f64,
    pub ty: f64,
}

/// Smallest |det| accepted as invertible.
pub const MIN_ABS_DET: f64 = 1e-6;
/// Allowed range of singular values for estimator outputs.
pub const SCALE_RANGE: (f64, f64) = (0.25, 4.0);

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform { a11: 1.0, a12: 0.0, a21: 0.0, a22: 1.0, tx: 0.0, ty: 0.0 };

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineTransform { tx, ty, ..Self::IDENTITY }
    }

    /// Rotation by `angle` (radians) and isotropic `scale` about `(cx, cy)`, then shift by `(dx, dy)`.
    pub fn similarity_about(angle: f64, scale: f64, cx: f64, cy: f64, dx: f64, dy: f64) -> Self {
        let (s, c) = libm::sincos(angle);
        Self::linear_about([[scale * c, -scale * s], [scale * s, scale * c]], cx, cy, dx, dy)
    }

    /// `p ↦ M·(p − c) + c + d`.
    pub fn linear_about(m: [[f64; 2]; 2], cx: f64, cy: f64, dx: f64, dy: f64) -> Self {
        AffineTransform {
            a11: m[0][0],
            a12: m[0][1],
            a21: m[1][0],
            a22: m[1][1],
            tx: cx + dx - (m[0][0] * cx + m[0][1] * cy),
            ty: cy + dy - (m[1][0] * cx + m[1][1] * cy),
        }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn is_invertible(&self) -> bool {
        let d = self.det();
        d.is_finite() && libm::fabs(d) > MIN_ABS_DET && self.is_finite()
    }

    pub fn is_finite(&self) -> bool {
        [self.a11, self.a12, self.a21, self.a22, self.tx, self.ty].iter().all(|v| v.is_finite())
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.a11 * x + self.a12 * y + self.tx, self.a21 * x + self.a22 * y + self.ty)
    }

    pub fn inverse(&self) -> Result<Self> {
        if !self.is_invertible() {
            return Err(invalid!("affine transform is not invertible (det = {})", self.det()));
        }
        let d = self.det();
        let (b11, b12, b21, b22) = (self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d);
        Ok(AffineTransform {
            a11: b11,
            a12: b12,
            a21: b21,
            a22: b22,
            tx: -(b11 * self.tx + b12 * self.ty),
            ty: -(b21 * self.tx + b22 * self.ty),
        })
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        AffineTransform {
            a11: self.a11 * other.a11 + self.a12 * other.a21,
            a12: self.a11 * other.a12 + self.a12 * other.a22,
            a21: self.a21 * other.a11 + self.a22 * other.a21,
            a22: self.a21 * other.a12 + self.a22 * other.a22,
            tx: self.a11 * other.tx + self.a12 * other.ty + self.tx,
            ty: self.a21 * other.tx + self.a22 * other.ty + self.ty,
        }
    }

    /// Singular values of the linear part, largest first.
    pub fn singular_values(&self) -> (f64, f64) {
        let (a, b, c, d) = (self.a11, self.a12, self.a21, self.a22);
        let s1 = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let disc = libm::sqrt((s1 * s1 - 4.0 * det * det).max(0.0));
        (libm::sqrt((s1 + disc) / 2.0), libm::sqrt(((s1 - disc) / 2.0).max(0.0)))
    }

    /// Invertible, orientation preserving, and with scale factors in [`SCALE_RANGE`].
    pub fn is_plausible(&self) -> bool {
        if !self.is_invertible() || self.det() <= 0.0 {
            return false;
        }
        let (hi, lo) = self.singular_values();
        lo >= SCALE_RANGE.0 && hi <= SCALE_RANGE.1
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}
