//! Perturbation-based faithfulness evaluation of saliency heatmaps for
//! semantic segmentation models.
//!
//! The harness thresholds each heatmap into a relevance mask, edits the input
//! image according to an evaluation strategy, re-runs the model through a
//! [`runner::ModelRunner`], and scores the new predictions against ground
//! truth with pixel-level confusion metrics and deltas to the unperturbed
//! baseline.

pub mod digest;
pub mod error;
pub mod metrics;
pub mod perturbation;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod runner;
pub mod synthetic;

pub use error::{Error, Result};
