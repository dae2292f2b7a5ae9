//! Slice-level kernels behind the graph operations.
//!
//! Convolution is cross-correlation lowered to a matrix product over the
//! unfolded input. Reductions use a fixed lane split so results do not depend
//! on the target.

use alloc::vec;
use alloc::vec::Vec;

use super::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    /// Unfold one input image `[cin,h,w]` into `[cin*kh*kw, oh*ow]`, zero outside.
    fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T]) {
        let op = self.oh * self.ow;
        for ic in 0..self.cin {
            let src = &x[ic * self.h * self.w..][..self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = &mut col[((ic * self.kh + ky) * self.kw + kx) * op..][..op];
                    for oy in 0..self.oh {
                        let dst = &mut row[oy * self.ow..][..self.ow];
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            dst.fill(T::zero());
                            continue;
                        }
                        let irow = &src[iy as usize * self.w..][..self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *d = if ix >= 0 && (ix as usize) < self.w { irow[ix as usize] } else { T::zero() };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add `[cin*kh*kw, oh*ow]` back onto `[cin,h,w]`.
    fn col2im_add<T: Scalar>(&self, col: &[T], gx: &mut [T]) {
        let op = self.oh * self.ow;
        for ic in 0..self.cin {
            let dst = &mut gx[ic * self.h * self.w..][..self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = &col[((ic * self.kh + ky) * self.kw + kx) * op..][..op];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        let drow = &mut dst[iy as usize * self.w..][..self.w];
                        for (ox, &v) in row[oy * self.ow..][..self.ow].iter().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && (ix as usize) < self.w {
                                drow[ix as usize] = drow[ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

const MR: usize = 4;
const NR: usize = 16;

/// `c[m×n] += a[m×k] · b[k×n]`, all row-major. Every output element is
/// accumulated in increasing `k` order starting from its current value.
pub(crate) fn gemm_acc<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    let mut i = 0;
    while i < m {
        let rows = MR.min(m - i);
        let mut j = 0;
        while j < n {
            let cols = NR.min(n - j);
            if rows == MR && cols == NR {
                let mut acc = [[T::zero(); NR]; MR];
                for r in 0..MR {
                    acc[r].copy_from_slice(&c[(i + r) * n + j..][..NR]);
                }
                for kk in 0..k {
                    let brow: &[T; NR] = b[kk * n + j..][..NR].try_into().expect("NR columns");
                    for r in 0..MR {
                        let av = a[(i + r) * k + kk];
                        for q in 0..NR {
                            acc[r][q] = acc[r][q] + av * brow[q];
                        }
                    }
                }
                for r in 0..MR {
                    c[(i + r) * n + j..][..NR].copy_from_slice(&acc[r]);
                }
            } else {
                let mut acc = [[T::zero(); NR]; MR];
                for r in 0..rows {
                    acc[r][..cols].copy_from_slice(&c[(i + r) * n + j..][..cols]);
                }
                for kk in 0..k {
                    let brow = &b[kk * n + j..][..cols];
                    for r in 0..rows {
                        let av = a[(i + r) * k + kk];
                        for (o, &bv) in acc[r].iter_mut().zip(brow) {
                            *o = *o + av * bv;
                        }
                    }
                }
                for r in 0..rows {
                    c[(i + r) * n + j..][..cols].copy_from_slice(&acc[r][..cols]);
                }
            }
            j += cols;
        }
        i += rows;
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(g: &ConvGeom, x: &[T], k: &[T], bias: &[T], out: &mut [T]) {
    let (ip, op, kr) = (g.cin * g.h * g.w, g.oh * g.ow, g.col_rows());
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); kr * op] };
    for n in 0..g.n {
        let xs = &x[n * ip..][..ip];
        let dst = &mut out[n * g.cout * op..][..g.cout * op];
        for (oc, plane) in dst.chunks_exact_mut(op).enumerate() {
            plane.fill(bias[oc]);
        }
        let b = if g.is_pointwise() {
            xs
        } else {
            g.im2col(xs, &mut col);
            &col
        };
        gemm_acc(g.cout, op, kr, k, b, dst);
    }
}

/// Accumulates input, kernel and bias gradients. Any of the outputs may be skipped.
pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    k: &[T],
    gout: &[T],
    mut gx: Option<&mut [T]>,
    mut gk: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let (ip, op, kr) = (g.cin * g.h * g.w, g.oh * g.ow, g.col_rows());
    let pointwise = g.is_pointwise();
    let mut col = if pointwise || gk.is_none() { Vec::new() } else { vec![T::zero(); kr * op] };
    let mut gcol = if gx.is_some() { vec![T::zero(); kr * op] } else { Vec::new() };
    let kt: Vec<T> = if gx.is_some() {
        (0..kr * g.cout).map(|i| k[(i % g.cout) * kr + i / g.cout]).collect()
    } else {
        Vec::new()
    };
    for n in 0..g.n {
        let gs = &gout[n * g.cout * op..][..g.cout * op];
        if let Some(gb) = gb.as_deref_mut() {
            for (oc, plane) in gs.chunks_exact(op).enumerate() {
                gb[oc] = gb[oc] + sum(plane);
            }
        }
        if let Some(gk) = gk.as_deref_mut() {
            let xs = &x[n * ip..][..ip];
            let b: &[T] = if pointwise {
                xs
            } else {
                g.im2col(xs, &mut col);
                &col
            };
            for (oc, grow) in gs.chunks_exact(op).enumerate() {
                for (r, brow) in b.chunks_exact(op).enumerate() {
                    let i = oc * kr + r;
                    gk[i] = gk[i] + dot(grow, brow);
                }
            }
        }
        if let Some(gx) = gx.as_deref_mut() {
            let dst = &mut gx[n * ip..][..ip];
            if pointwise {
                gemm_acc(kr, op, g.cout, &kt, gs, dst);
            } else {
                gcol.fill(T::zero());
                gemm_acc(kr, op, g.cout, &kt, gs, &mut gcol);
                g.col2im_add(&gcol, dst);
            }
        }
    }
}

const LANES: usize = 8;

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            lanes[i] = lanes[i] + x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    fold_lanes(lanes) + tail
}

#[inline]
pub(crate) fn sum<T: Scalar>(a: &[T]) -> T {
    let mut lanes = [T::zero(); LANES];
    let chunks = a.chunks_exact(LANES);
    let rest = chunks.remainder();
    for x in chunks {
        for i in 0..LANES {
            lanes[i] = lanes[i] + x[i];
        }
    }
    let mut tail = T::zero();
    for &x in rest {
        tail = tail + x;
    }
    fold_lanes(lanes) + tail
}

#[inline]
fn fold_lanes<T: Scalar>(l: [T; LANES]) -> T {
    ((l[0] + l[4]) + (l[1] + l[5])) + ((l[2] + l[6]) + (l[3] + l[7]))
}
