use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::Image;

use super::{estimate_affine_moments, mask_moments, sample_bilinear, AffineTransform};

/// Multi-start coordinate descent settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NccConfig {
    /// Number of start points, at most 4: identity, moments, centroid shift,
    /// moments without shear or rotation.
    pub starts: usize,
    /// Maximum coordinate sweeps per start.
    pub iters: usize,
    /// Initial step for the linear coefficients; translations use
    /// `step × max(H, W) / 2` pixels. Steps halve after a sweep without improvement.
    pub step: f64,
    /// Descent stops once the linear step falls below this.
    pub min_step: f64,
    /// Evaluate the correlation on every `stride`-th row and column.
    pub stride: usize,
    pub eps: f64,
}

impl Default for NccConfig {
    fn default() -> Self {
        NccConfig { starts: 4, iters: 200, step: 0.04, min_step: 1e-3, stride: 1, eps: super::DEFAULT_EPS }
    }
}

/// Precomputed target samples on the evaluation grid.
struct Grid {
    points: Vec<(f64, f64)>,
    values: Vec<f64>,
    mean: f64,
    norm: f64,
}

impl Grid {
    fn new(target: &Image, stride: usize) -> Self {
        let stride = stride.max(1);
        let mut points = Vec::new();
        let mut values = Vec::new();
        for y in (0..target.height()).step_by(stride) {
            for x in (0..target.width()).step_by(stride) {
                points.push((x as f64, y as f64));
                values.push(target.get(y, x) as f64);
            }
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let norm = libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>());
        Grid { points, values, mean, norm }
    }

    /// Pearson correlation between the warped source and the target; 0 when either is flat.
    fn score(&self, source: &Image, t: &AffineTransform) -> f64 {
        let n = self.values.len() as f64;
        let (mut sw, mut sww, mut swt) = (0.0, 0.0, 0.0);
        for (&(x, y), &tv) in self.points.iter().zip(&self.values) {
            let (xs, ys) = t.apply(x, y);
            let w = sample_bilinear(source, xs, ys) as f64;
            sw += w;
            sww += w * w;
            swt += w * (tv - self.mean);
        }
        let var_w = sww - sw * sw / n;
        if !(var_w > 1e-12) || !(self.norm > 1e-12) {
            return 0.0;
        }
        swt / (libm::sqrt(var_w) * self.norm)
    }
}

/// Normalized cross-correlation of `warp(source, t)` with `target` over the full target frame.
pub fn ncc(source: &Image, target: &Image, t: &AffineTransform) -> f64 {
    Grid::new(target, 1).score(source, t)
}

/// Centered parameterization: `p ↦ M (p − c) + c + d`.
#[derive(Clone, Copy)]
struct Params {
    m: [f64; 4],
    d: [f64; 2],
}

impl Params {
    fn from_transform(t: &AffineTransform, cx: f64, cy: f64) -> Self {
        let m = [t.a11, t.a12, t.a21, t.a22];
        let d = [t.tx + m[0] * cx + m[1] * cy - cx, t.ty + m[2] * cx + m[3] * cy - cy];
        Params { m, d }
    }

    fn to_transform(self, cx: f64, cy: f64) -> AffineTransform {
        AffineTransform::linear_about([[self.m[0], self.m[1]], [self.m[2], self.m[3]]], cx, cy, self.d[0], self.d[1])
    }

    fn bumped(mut self, i: usize, delta: f64) -> Self {
        if i < 4 {
            self.m[i] += delta;
        } else {
            self.d[i - 4] += delta;
        }
        self
    }
}

/// Affine transform maximizing NCC between the warped source and the target.
///
/// Runs coordinate descent from each start and returns the best result; the
/// earliest start wins ties, so identity is returned whenever nothing beats it.
pub fn estimate_affine_ncc(source: &Image, target: &Image, config: &NccConfig) -> AffineTransform {
    let grid = Grid::new(target, config.stride);
    let (cx, cy) = ((target.width() as f64 - 1.0) / 2.0, (target.height() as f64 - 1.0) / 2.0);

    let mut starts = alloc::vec![AffineTransform::IDENTITY];
    if let Ok(m) = estimate_affine_moments(source, target, config.eps) {
        starts.push(m);
        if let (Ok(ms), Ok(mt)) = (mask_moments(source, config.eps), mask_moments(target, config.eps)) {
            starts.push(AffineTransform::translation(ms.cx - mt.cx, ms.cy - mt.cy));
            let (sx, sy) = (libm::sqrt(ms.cov[0][0] / mt.cov[0][0]), libm::sqrt(ms.cov[1][1] / mt.cov[1][1]));
            let axis = AffineTransform {
                a11: sx,
                a12: 0.0,
                a21: 0.0,
                a22: sy,
                tx: ms.cx - sx * mt.cx,
                ty: ms.cy - sy * mt.cy,
            };
            if axis.is_plausible() {
                starts.push(axis);
            }
        }
    }
    starts.truncate(config.starts.clamp(1, 4));

    let tr_scale = target.height().max(target.width()) as f64 / 2.0;
    let mut best = (grid.score(source, &AffineTransform::IDENTITY), AffineTransform::IDENTITY);
    for start in starts {
        let (score, t) = descend(&grid, source, start, cx, cy, tr_scale, config);
        if score > best.0 {
            best = (score, t);
        }
    }
    best.1
}

fn descend(
    grid: &Grid,
    source: &Image,
    start: AffineTransform,
    cx: f64,
    cy: f64,
    tr_scale: f64,
    config: &NccConfig,
) -> (f64, AffineTransform) {
    let mut p = Params::from_transform(&start, cx, cy);
    let mut score = grid.score(source, &start);
    let mut step = config.step;
    for _ in 0..config.iters {
        if step < config.min_step {
            break;
        }
        let mut improved = false;
        for i in 0..6 {
            let delta = if i < 4 { step } else { step * tr_scale };
            let mut local_best: Option<(f64, Params)> = None;
            for sign in [1.0, -1.0] {
                let cand = p.bumped(i, sign * delta);
                let t = cand.to_transform(cx, cy);
                if !t.is_plausible() {
                    continue;
                }
                let s = grid.score(source, &t);
                if s > score && local_best.as_ref().is_none_or(|(b, _)| s > *b) {
                    local_best = Some((s, cand));
                }
            }
            if let Some((s, cand)) = local_best {
                score = s;
                p = cand;
                improved = true;
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (score, p.to_transform(cx, cy))
}
