//! Affine alignment of a prior image onto its current counterpart.
//!
//! Two classical estimators propose transforms (mask moments and NCC
//! descent); [`select_alignment`] keeps whichever candidate gives the larger
//! IoU between the nonzero masks of the warped source and the target.

mod affine;
mod mask;
mod moments;
mod ncc;
mod pair;
pub mod phantom;
mod select;
mod warp;

pub use affine::AffineTransform;
pub use mask::{mask_iou, nonzero_mask};
pub use moments::{estimate_affine_moments, mask_moments, MaskMoments};
pub use ncc::{estimate_affine_ncc, ncc, NccConfig};
pub use pair::{align_pair, align_view, AlignConfig};
pub use select::{select_alignment, warped_iou, AlignmentResult, Candidate, Estimator};
pub use warp::{affine_warp, sample_bilinear};

/// Default foreground threshold for images normalized to `[0, 1]`.
pub const DEFAULT_EPS: f64 = 1e-6;
