//! Pixel-level part segmentation from object keypoint annotations.
//!
//! The pipeline turns keypoints into pseudo segmentation masks by cutting a
//! superpixel graph: keypoints become a part-labeled skeleton, skeleton
//! overlap and keypoint distance become hard unary evidence, appearance
//! histograms become contrast-sensitive pairwise weights, and a multi-label
//! alpha-expansion finds the minimum-energy labeling. A built-in region
//! softmax scorer (or externally supplied score maps) feeds an extra unary
//! term for iterative refinement, and a correlation step couples part and
//! object predictions.
//!
//! The crate is `no_std` (with `alloc`): it works purely on in-memory
//! buffers and is deterministic for fixed inputs. All IO, file formats and
//! the command-line front end live in the companion `partcut` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod math;

pub mod edt;
pub mod energy;
pub mod evaluation;
pub mod graphcut;
pub mod model;
pub mod pipeline;
pub mod skeleton;
pub mod superpixels;

pub use model::{
    clamp_keypoints, mask_to_object, ImagePlane, Keypoint, LabelMask, PartTaxonomy,
    PersonKeypoints, ScoreMap, BACKGROUND,
};
pub use superpixels::{build_adjacency, segment_graph_based, AdjacencyGraph, SuperPixelPartition};
