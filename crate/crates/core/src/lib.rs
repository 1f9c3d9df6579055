//! Generates 3-D violinist skeleton motion from music audio.
//!
//! The pipeline runs from audio features through beat-synchronous
//! alignment and segmentation to a U-net/attention generator, trained with
//! an in-crate autodiff engine and scored with pose and bowing metrics.

pub mod alignment;
pub mod audio_features;
pub mod cli;
pub mod autodiff;
pub mod error;
pub mod matfile;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod skeleton;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
