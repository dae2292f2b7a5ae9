//! Longitudinal comparison of screening mammogram pairs.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every algorithmic
//! piece of the pipeline: a small reverse-mode autodiff engine, affine
//! alignment of prior images onto current images, the exam/cohort data model
//! with pairing and epoch sampling rules, a synthetic phantom cohort
//! generator, the pairwise comparison networks, training and model selection,
//! and ROC-AUC based evaluation with ensembling.
//!
//! File formats, the command line and parallel orchestration live in the
//! `longview` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod align;
pub mod cohort;
pub mod error;
pub mod eval;
pub mod image;
pub mod nets;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
