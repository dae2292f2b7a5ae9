use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::Image;

use super::{affine_warp, mask_iou, nonzero_mask, AffineTransform};

/// Which estimator proposed a transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Estimator {
    Identity,
    Moments,
    Ncc,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Identity, Estimator::Moments, Estimator::Ncc];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Identity => "identity",
            Estimator::Moments => "moments",
            Estimator::Ncc => "ncc",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Estimator {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| invalid!("unknown estimator {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub estimator: Estimator,
    pub transform: AffineTransform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub transform: AffineTransform,
    /// IoU between the nonzero masks of the warped source and the target.
    pub iou: f64,
    pub estimator_id: Estimator,
    /// Set when the source could not be aligned and was passed through unchanged.
    pub degenerate: bool,
}

/// IoU of nonzero masks after warping `source` into `target`'s frame.
pub fn warped_iou(source: &Image, target: &Image, t: &AffineTransform, eps: f64) -> Result<f64> {
    let warped = affine_warp(source, t, target.height(), target.width())?;
    mask_iou(&nonzero_mask(&warped, eps), &nonzero_mask(target, eps))
}

/// The candidate with the largest warped-mask IoU; the earliest candidate wins ties.
pub fn select_alignment(source: &Image, target: &Image, candidates: &[Candidate], eps: f64) -> Result<AlignmentResult> {
    if candidates.is_empty() {
        return Err(invalid!("select_alignment needs at least one candidate"));
    }
    let mut best: Option<AlignmentResult> = None;
    for c in candidates {
        let iou = warped_iou(source, target, &c.transform, eps)?;
        if best.as_ref().is_none_or(|b| iou > b.iou) {
            best = Some(AlignmentResult { transform: c.transform, iou, estimator_id: c.estimator, degenerate: false });
        }
    }
    Ok(best.expect("nonempty candidates"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn disk(cx: f64, cy: f64) -> Image {
        Image::from_fn(40, 40, |y, x| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= 64.0 {
                0.7
            } else {
                0.0
            }
        })
    }

    #[test]
    fn correct_transform_wins() {
        let (src, tgt) = (disk(20.0, 20.0), disk(26.0, 20.0));
        let cands = [
            Candidate { estimator: Estimator::Identity, transform: AffineTransform::IDENTITY },
            Candidate { estimator: Estimator::Moments, transform: AffineTransform::translation(-6.0, 0.0) },
        ];
        let r = select_alignment(&src, &tgt, &cands, 1e-6).unwrap();
        assert_eq!(r.estimator_id, Estimator::Moments);
        assert_eq!(r.iou, 1.0);
    }

    #[test]
    fn single_and_tied_candidates() {
        let (src, tgt) = (disk(20.0, 20.0), disk(22.0, 20.0));
        let one = [Candidate { estimator: Estimator::Ncc, transform: AffineTransform::IDENTITY }];
        let r = select_alignment(&src, &tgt, &one, 1e-6).unwrap();
        assert_eq!(r.iou, warped_iou(&src, &tgt, &AffineTransform::IDENTITY, 1e-6).unwrap());
        let two = [
            Candidate { estimator: Estimator::Moments, transform: AffineTransform::IDENTITY },
            Candidate { estimator: Estimator::Ncc, transform: AffineTransform::IDENTITY },
        ];
        assert_eq!(select_alignment(&src, &tgt, &two, 1e-6).unwrap().estimator_id, Estimator::Moments);
        assert!(select_alignment(&src, &tgt, &vec![], 1e-6).is_err());
    }
}
