//! Random convolution kernel features for time series classification, with
//! evolutionary pruning of redundant kernels.
//!
//! The pipeline draws a bank of random dilated 1-D kernels, turns every
//! series into one PPV feature per kernel, fits a ridge classifier, then
//! searches with binary differential evolution for a small kernel subset that
//! keeps training accuracy, and finally refits the classifier on the kept
//! kernels only.

pub mod classifier;
pub mod cli;
pub mod data;
pub mod error;
pub mod optimizer;
pub mod pipeline;
pub mod transform;

pub use error::{Error, Result};
