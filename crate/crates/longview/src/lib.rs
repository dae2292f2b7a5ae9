//! File formats, experiment orchestration and the command line for
//! `longview-core`.

mod bytes;

pub mod aligned;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod raster;
pub mod report;

pub use error::{Error, Result};
pub use longview_core as core;
