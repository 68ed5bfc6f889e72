use std::cmp::Ordering;

use super::polygon::{convex_intersection_area, ConvexPolygon, Point2};
use super::pose::{normalize_angle, Point3, Pose};
use super::GeometryError;

/// 7-DOF box: center, extents along its local x (length), y (width) and
/// z (height), and a rotation about the world z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl OrientedBox {
    /// Builds a box, normalizing yaw and checking that every extent is
    /// positive and every field finite.
    pub fn new(cx: f64, cy: f64, cz: f64, l: f64, w: f64, h: f64, yaw: f64) -> Result<Self, GeometryError> {
        let b = Self { cx, cy, cz, l, w, h, yaw: normalize_angle(yaw) };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let fields = [
            ("cx", self.cx),
            ("cy", self.cy),
            ("cz", self.cz),
            ("l", self.l),
            ("w", self.w),
            ("h", self.h),
            ("yaw", self.yaw),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(GeometryError::InvalidBox { field: name, value: v });
            }
        }
        for (name, v) in [("l", self.l), ("w", self.w), ("h", self.h)] {
            if v <= 0.0 {
                return Err(GeometryError::InvalidBox { field: name, value: v });
            }
        }
        if !(self.yaw > -std::f64::consts::PI && self.yaw <= std::f64::consts::PI) {
            return Err(GeometryError::InvalidBox { field: "yaw", value: self.yaw });
        }
        Ok(())
    }

    pub fn center(&self) -> Point3 {
        Point3::new(self.cx, self.cy, self.cz)
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    pub fn bev_area(&self) -> f64 {
        self.l * self.w
    }

    pub fn z_min(&self) -> f64 {
        self.cz - 0.5 * self.h
    }

    pub fn z_max(&self) -> f64 {
        self.cz + 0.5 * self.h
    }

    /// Radius of the BEV footprint's circumscribed circle.
    pub fn bev_circumradius(&self) -> f64 {
        0.5 * self.l.hypot(self.w)
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * (self.l * self.l + self.w * self.w + self.h * self.h).sqrt()
    }

    /// Same center and yaw, extents multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { l: self.l * factor, w: self.w * factor, h: self.h * factor, ..*self }
    }

    /// Expresses a world point in the box frame (origin at the center, x along
    /// the length).
    pub fn to_local(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        Point3::new(c * dx + s * dy, -s * dx + c * dy, p.z - self.cz)
    }

    /// Closed containment test: faces count as inside.
    pub fn contains(&self, p: &Point3) -> bool {
        let dz = p.z - self.cz;
        if dz.abs() > 0.5 * self.h {
            return false;
        }
        let local = self.to_local(p);
        local.x.abs() <= 0.5 * self.l && local.y.abs() <= 0.5 * self.w
    }

    /// BEV corners, counter-clockwise.
    pub fn bev_corners(&self) -> [Point2; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (0.5 * self.l, 0.5 * self.w);
        [(hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)].map(|(lx, ly)| {
            Point2::new(self.cx + c * lx - s * ly, self.cy + s * lx + c * ly)
        })
    }

    pub fn footprint(&self) -> ConvexPolygon {
        ConvexPolygon::from_ccw_unchecked(self.bev_corners().to_vec())
    }

    /// Applies a rigid transform to the box pose.
    pub fn transformed(&self, pose: &Pose) -> Self {
        let c = pose.apply(&self.center());
        Self { cx: c.x, cy: c.y, cz: c.z, yaw: normalize_angle(self.yaw + pose.yaw), ..*self }
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        let a = [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw];
        let b = [other.cx, other.cy, other.cz, other.l, other.w, other.h, other.yaw];
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

/// Standalone form of [`OrientedBox::contains`].
pub fn point_in_box(p: &Point3, b: &OrientedBox) -> bool {
    b.contains(p)
}

fn bev_intersection(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a.bev_distance_to(b) > a.bev_circumradius() + b.bev_circumradius() {
        return 0.0;
    }
    // Clip in a fixed argument order so the result is symmetric bit-for-bit.
    let (first, second) = if a.canonical_cmp(b).is_le() { (a, b) } else { (b, a) };
    convex_intersection_area(&first.footprint(), &second.footprint())
}

impl OrientedBox {
    fn bev_distance_to(&self, other: &Self) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Intersection over union of the BEV footprints.
pub fn iou_bev(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let inter = bev_intersection(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    clamp_unit(inter / (a.bev_area() + b.bev_area() - inter))
}

/// Length of the overlap of the boxes' vertical extents.
pub fn z_overlap(a: &OrientedBox, b: &OrientedBox) -> f64 {
    (a.z_max().min(b.z_max()) - a.z_min().max(b.z_min())).max(0.0)
}

/// 3D intersection over union: yaw-aware in the ground plane, axis-aligned
/// in z.
pub fn iou_3d(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let dz = z_overlap(a, b);
    if dz == 0.0 {
        return 0.0;
    }
    let inter_area = bev_intersection(a, b);
    if inter_area == 0.0 {
        return 0.0;
    }
    let inter = inter_area * dz;
    clamp_unit(inter / (a.volume() + b.volume() - inter))
}
