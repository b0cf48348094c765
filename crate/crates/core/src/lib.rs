//! Tomato phenotyping from segmentation polygons, keypoints and depth maps.
//!
//! The measurement path turns one fruit contour into metric traits:
//!
//! 1. **Separation** – crop the fruit's region out of the scene ([`phenotype::crop_individual`]).
//! 2. **Pose** – rotate so the carpopodium sits directly above the body ([`pose`]).
//! 3. **Measurement** – width, height, vertical area and solid-of-revolution volume in pixels ([`phenotype::measure`]).
//! 4. **Fusion** – convert pixels to centimeters using the depth map and an inverse-proportional
//!    depth-to-scale calibration ([`fusion`]).
//!
//! The evaluation side ([`metrics`], [`edgeops`]) implements relative error, box-plot statistics,
//! mean edge error, mask IoU, precision/recall/mAP50, Sobel-based edge loss, the contrast/acutance
//! preprocessor and a reference forward pass of the edge attention block.

// `!(x > 0.0)` is used on purpose so NaN is rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod edgeops;
pub mod error;
pub mod formats;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod phenotype;
pub mod pipeline;
pub mod pose;

pub use error::{Error, Result};
pub use geometry::{Point, PolygonMask, RasterGrid};
