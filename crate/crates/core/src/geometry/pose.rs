use std::f64::consts::{PI, TAU};

/// Wraps an angle into (−π, π]. Angles already in range are returned as is.
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Smallest signed difference `a − b`, in (−π, π].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// A 3D point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        dx * dx + dy * dy + dz * dz
    }

    pub fn bev_distance(&self, other: &Point3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Planar rigid transform with a vertical offset: translation (x, y, z) and a
/// rotation about z. Used for vehicle, sender and ego frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose { x: 0.0, y: 0.0, z: 0.0, yaw: 0.0 };

    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self { x, y, z, yaw: normalize_angle(yaw) }
    }

    /// `self ∘ other`: maps a point through `other`, then through `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        Pose {
            x: self.x + c * other.x - s * other.y,
            y: self.y + s * other.x + c * other.y,
            z: self.z + other.z,
            yaw: normalize_angle(self.yaw + other.yaw),
        }
    }

    pub fn inverse(&self) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        Pose {
            x: -(c * self.x + s * self.y),
            y: -(-s * self.x + c * self.y),
            z: -self.z,
            yaw: normalize_angle(-self.yaw),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        Point3 {
            x: self.x + c * p.x - s * p.y,
            y: self.y + s * p.x + c * p.y,
            z: self.z + p.z,
        }
    }

    pub fn translation(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.yaw.is_finite()
    }
}

/// Standalone form of [`Pose::compose`].
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}
