//! Individual tree segmentation of forest point clouds.
//!
//! A per-point tree probability and offset-to-trunk-base field is predicted on
//! overlapping tiles, merged, and used to project points towards their tree
//! base. Projected trunk points are grouped by single linkage and the remaining
//! tree points are assigned by nearest-neighbour vote.

pub mod assigner;
pub mod cloud;
pub mod clusterer;
mod error;
pub mod features;
pub mod hull;
pub mod io;
pub mod label_propagation;
pub mod metrics;
pub mod pipeline;
pub mod point;
pub mod predictor;
mod scalar;
pub mod spatial;
pub mod synthetic;
pub mod tiler;

pub use cloud::{PointCloud, PointLabel, VoxelIndexMap};
pub use error::{Error, Result};
pub use point::Point3;
pub use predictor::{Alignment, PredictionField, TreeBase};
pub use scalar::Scalar;

pub type Cloud = PointCloud<f64>;
pub type Point = Point3<f64>;
pub type Field = PredictionField<f64>;
