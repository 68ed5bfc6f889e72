//! Oriented-box geometry: rigid transforms, point-in-box, convex clipping and
//! BEV / 3D intersection over union.
//!
//! Boxes rotate about z only. All functions are pure.

mod boxes;
mod polygon;
mod pose;

pub use boxes::{iou_3d, iou_bev, point_in_box, z_overlap, OrientedBox};
pub use polygon::{clip_convex, convex_intersection_area, shoelace, ConvexPolygon, Point2, AREA_EPS};
pub use pose::{angle_diff, compose, normalize_angle, Point3, Pose};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid box: {field} = {value}")]
    InvalidBox { field: &'static str, value: f64 },
    #[error("invalid polygon: {0}")]
    Polygon(String),
}
