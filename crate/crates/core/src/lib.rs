//! Certified robustness of image classifiers against camera motion.
//!
//! Images are rendered from dense colored point clouds under a parameterized
//! camera motion. A base classifier is wrapped in a Monte-Carlo smoothed
//! classifier that averages its predictions over Gaussian camera motions, and
//! the smoothed prediction is certified against every one-axis (or
//! fixed-axis) motion inside a computed radius.
//!
//! Module map:
//!
//! - [`geometry`]: pinhole intrinsics, axis-angle rotations, point projection.
//! - [`motion`]: motion composition, per-axis motions, seeded samplers.
//! - [`pointcloud`]: colored clouds, PLY I/O, downsampling.
//! - [`renderer`]: z-buffered floor splatting and the image tensor format.
//! - [`scene`]: synthetic labeled scenes and train/test camera poses.
//! - [`classifier`]: base classifiers (built-in nearest centroid, external process).
//! - [`smoothing`]: Monte-Carlo smoothed prediction.
//! - [`certify`]: binomial bounds, normal quantile, certified radii.
//! - [`evaluate`]: benign, empirical-robust and certified accuracy.
//! - [`pipeline`]: training sets and evaluation views built from a scene set.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod classifier;
mod error;
pub mod evaluate;
pub mod geometry;
pub mod motion;
pub mod pipeline;
pub mod pointcloud;
pub mod renderer;
pub mod scene;
pub mod smoothing;

pub use error::{Error, Result};
