//! Sketch extraction and adaptively weighted multi-style transfer.
//!
//! The sketch side turns a photo into a pencil-line drawing: [`smooth`]
//! removes texture with L0 gradient minimization, [`pencil`] synthesizes
//! strokes from the smoothed gradients, and [`dataset`] batches the two into
//! paired training data. [`edge`] provides a Canny detector for comparison.
//!
//! The style side optimizes an image against a content picture and several
//! style exemplars. Features come from the fixed filter pyramid in
//! [`feature`]; [`asw`] ranks the exemplars with PageRank over their feature
//! similarity and [`transfer`] runs Adam on the weighted loss.

pub mod asw;
pub mod dataset;
pub mod edge;
pub mod error;
pub mod feature;
mod fft2;
pub mod imgio;
pub mod pencil;
pub mod smooth;
pub mod transfer;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, ErrorKind, Result};
pub use imgio::{GrayImage, ImageBuf, ImageFormat};
