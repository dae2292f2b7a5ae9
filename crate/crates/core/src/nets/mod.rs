//! Pairwise comparison networks.
//!
//! * `SingleBaseline`: backbone on the current image only, then the head.
//! * `GlobalCompare`: shared backbone on both images, global average pooling,
//!   concatenation `(current, prior)`, then the head.
//! * `AlignLocalCompare`: shared backbone on the current and the aligned prior
//!   image, channel concatenation of the feature maps, a channel-preserving
//!   1×1 convolution with ReLU, global average pooling, then the head.
//!
//! The head is a ReLU hidden layer followed by two independent two-way
//! softmax outputs (benign, malignant). Per-view probabilities of the same
//! breast are averaged.

mod backbone;
mod compare;
mod head;
mod model;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error};

pub use backbone::{backbone_forward, BackboneIds};
pub use compare::{align_local_compare_forward, global_compare_forward};
pub use head::{head_forward, HeadIds, HeadOutput};
pub use model::{BreastPredictions, PairModel, BACKBONE_PREFIX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    GlobalCompare,
    AlignLocalCompare,
    SingleBaseline,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::SingleBaseline, Variant::GlobalCompare, Variant::AlignLocalCompare];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::GlobalCompare => "global-compare",
            Variant::AlignLocalCompare => "align-local-compare",
            Variant::SingleBaseline => "single-baseline",
        }
    }

    /// Whether the prior image is an input at all.
    pub fn uses_prior(self) -> bool {
        self != Variant::SingleBaseline
    }

    /// Whether the prior must be aligned to the current image first.
    pub fn needs_alignment(self) -> bool {
        self == Variant::AlignLocalCompare
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s) || alloc::format!("{v:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid!("unknown variant {s:?}"))
    }
}

/// Residual backbone layout: a 3×3 stem followed by stages of basic residual
/// blocks. The first block of each stage applies the stage stride.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub stem_channels: usize,
    pub channels: Vec<usize>,
    pub blocks: Vec<usize>,
    pub strides: Vec<usize>,
    /// Zero-initialize the second convolution of every block.
    pub zero_init_residual: bool,
}

impl BackboneConfig {
    /// Four stages (8, 16, 32, 64), one block each, stride 2 everywhere.
    pub fn desk() -> Self {
        BackboneConfig {
            stem_channels: 8,
            channels: vec![8, 16, 32, 64],
            blocks: vec![1, 1, 1, 1],
            strides: vec![2, 2, 2, 2],
            zero_init_residual: false,
        }
    }

    /// Final feature channels `C`.
    pub fn out_channels(&self) -> usize {
        *self.channels.last().unwrap_or(&self.stem_channels)
    }

    pub fn total_stride(&self) -> usize {
        self.strides.iter().product()
    }

    /// Spatial size of the feature map for an `h × w` input.
    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        self.strides.iter().fold((h, w), |(h, w), &s| ((h - 1) / s + 1, (w - 1) / s + 1))
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.channels.is_empty()
            || self.channels.len() != self.blocks.len()
            || self.channels.len() != self.strides.len()
            || self.channels.iter().chain([&self.stem_channels]).any(|&c| c == 0)
            || self.blocks.iter().any(|&b| b == 0)
            || self.strides.iter().any(|&s| s == 0)
        {
            return Err(invalid!("backbone stages need matching positive channels/blocks/strides: {self:?}"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairModelConfig {
    pub variant: Variant,
    pub backbone: BackboneConfig,
    pub hidden_dim: usize,
    pub freeze_backbone: bool,
    /// Standardize the representation with fixed statistics fitted on the
    /// training pairs before the head.
    #[serde(default)]
    pub standardize: bool,
}

impl PairModelConfig {
    /// Desk-scale defaults: desk backbone, hidden width 32, standardized
    /// representation.
    pub fn desk(variant: Variant) -> Self {
        PairModelConfig { variant, backbone: BackboneConfig::desk(), hidden_dim: 32, freeze_backbone: true, standardize: true }
    }

    /// Length of the representation fed to the head.
    pub fn representation_dim(&self) -> usize {
        match self.variant {
            Variant::SingleBaseline => self.backbone.out_channels(),
            Variant::GlobalCompare | Variant::AlignLocalCompare => 2 * self.backbone.out_channels(),
        }
    }
}

/// Per-image presence probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub benign: f64,
    pub malignant: f64,
}
