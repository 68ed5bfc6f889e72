//! Collective-perception detection fusion toolkit.
//!
//! Received detections from cooperative vehicles are fused into a local
//! LiDAR detection pipeline at four points (point decoration, collective
//! proposals, raw box features, collective-box keypoint sampling) and compared
//! against a Hungarian-matching + weighted-box-fusion late-fusion baseline.
//! A synthetic highway scene generator with a ray-cast LiDAR and a noisy
//! detector emulator stands in for recorded data and a trained network.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cpm;
pub mod dataset;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod late_fusion;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod sim;

pub use cpm::{CpmMessage, Detection};
pub use geometry::{OrientedBox, Point3, Pose};
pub use sampling::{Point, PointCloud};
