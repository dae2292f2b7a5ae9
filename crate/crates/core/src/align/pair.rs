use serde::{Deserialize, Serialize};

use crate::cohort::{Exam, ExamPair, View};
use crate::error::Result;
use crate::image::Image;

use super::{
    affine_warp, estimate_affine_moments, estimate_affine_ncc, nonzero_mask, select_alignment, AffineTransform,
    AlignmentResult, Candidate, Estimator, NccConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub eps: f64,
    pub ncc: NccConfig,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig { eps: super::DEFAULT_EPS, ncc: NccConfig::default() }
    }
}

/// Align one prior view onto its current view.
///
/// Returns the warped source and the chosen candidate. A source or target
/// without foreground is passed through unchanged with a flagged identity result.
pub fn align_view(source: &Image, target: &Image, config: &AlignConfig) -> Result<(Image, AlignmentResult)> {
    if nonzero_mask(source, config.eps).is_empty() || nonzero_mask(target, config.eps).is_empty() {
        let warped = source.center_fit(target.height(), target.width());
        let iou = super::warped_iou(source, target, &AffineTransform::IDENTITY, config.eps)?;
        let result = AlignmentResult { transform: AffineTransform::IDENTITY, iou, estimator_id: Estimator::Identity, degenerate: true };
        return Ok((warped, result));
    }
    let ncc_config = NccConfig { eps: config.eps, ..config.ncc };
    let mut candidates = alloc::vec::Vec::with_capacity(2);
    if let Ok(t) = estimate_affine_moments(source, target, config.eps) {
        candidates.push(Candidate { estimator: Estimator::Moments, transform: t });
    }
    candidates.push(Candidate { estimator: Estimator::Ncc, transform: estimate_affine_ncc(source, target, &ncc_config) });
    let result = select_alignment(source, target, &candidates, config.eps)?;
    let warped = affine_warp(source, &result.transform, target.height(), target.width())?;
    Ok((warped, result))
}

/// Align every prior view of `pair` onto the matching current view.
///
/// The current exam is untouched; the returned pair carries the aligned prior
/// and one [`AlignmentResult`] per view.
pub fn align_pair(pair: &ExamPair, config: &AlignConfig) -> Result<ExamPair> {
    let (prior, current) = (pair.prior(), pair.current());
    let mut images: [Image; 4] = Default::default();
    let mut results = [AlignmentResult {
        transform: AffineTransform::IDENTITY,
        iou: 0.0,
        estimator_id: Estimator::Identity,
        degenerate: false,
    }; 4];
    for v in View::ALL {
        let (warped, result) = align_view(prior.image(v), current.image(v), config)?;
        images[v.index()] = warped;
        results[v.index()] = result;
    }
    let aligned = Exam { images, ..Exam::clone(prior) };
    pair.with_aligned_prior(aligned, results)
}
