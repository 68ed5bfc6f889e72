use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{RangeNoise, SensorSpec};
use crate::geometry::{angle_diff, OrientedBox, Point3, Pose};
use crate::par;
use crate::rng::{stream, Purpose};
use crate::sampling::{Point, PointCloud};

pub const VEHICLE_INTENSITY: f64 = 1.0;
// Stored as f32 on disk; keep the in-memory value identical.
pub const GROUND_INTENSITY: f64 = 0.2f32 as f64;

/// What a return hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hit {
    Ground,
    /// Index into the box list passed to the caster.
    Box(usize),
}

/// Random-stream key of one sensor sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepKey {
    pub seed: u64,
    pub frame: u64,
    pub vehicle: u64,
}

/// Entry distance of the ray `o + t·d` into the box, if it enters at t > 0.
pub fn ray_box_entry(o: [f64; 3], d: [f64; 3], b: &OrientedBox) -> Option<f64> {
    let (s, c) = b.yaw.sin_cos();
    let (px, py) = (o[0] - b.cx, o[1] - b.cy);
    let p = [c * px + s * py, -s * px + c * py, o[2] - b.cz];
    let dir = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
    let half = [b.l / 2.0, b.w / 2.0, b.h / 2.0];
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        if dir[axis].abs() < 1e-15 {
            if p[axis].abs() > half[axis] {
                return None;
            }
            continue;
        }
        let a = (-half[axis] - p[axis]) / dir[axis];
        let z = (half[axis] - p[axis]) / dir[axis];
        let (lo, hi) = if a < z { (a, z) } else { (z, a) };
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 0.0).then_some(t0)
}

/// Angular footprint of a box seen from the BEV origin.
struct Silhouette {
    center_az: f64,
    lo: f64,
    hi: f64,
}

impl Silhouette {
    fn new(b: &OrientedBox) -> Self {
        let center_az = b.cy.atan2(b.cx);
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for corner in b.bev_corners() {
            let d = angle_diff(corner.y.atan2(corner.x), center_az);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        // Slack for rays grazing a corner.
        Self { center_az, lo: lo - 1e-9, hi: hi + 1e-9 }
    }

    fn covers(&self, az: f64) -> bool {
        let d = angle_diff(az, self.center_az);
        d >= self.lo && d <= self.hi
    }
}

/// Sweeps the sensor over boxes given in the sensor owner's vehicle frame
/// (sensor at `(0, 0, mount_height)`). Returns points in that frame with
/// what each one hit, ordered by channel then azimuth.
///
/// Every ray draws its noise sample whether or not it hits, so one ray's
/// noise does not depend on the rest of the scene.
pub fn sweep(boxes: &[OrientedBox], spec: &SensorSpec, key: SweepKey) -> Vec<(Point, Hit)> {
    let origin = [0.0, 0.0, spec.mount_height];
    let steps = spec.azimuth_steps();
    let sensor = Point3::new(origin[0], origin[1], origin[2]);
    // Boxes out of range or around the sensor itself are never hit.
    let reachable: Vec<usize> = (0..boxes.len())
        .filter(|&i| {
            let b = &boxes[i];
            b.cx.hypot(b.cy) - b.bev_circumradius() <= spec.max_range && !b.contains(&sensor)
        })
        .collect();
    let silhouettes: Vec<Silhouette> = reachable.iter().map(|&i| Silhouette::new(&boxes[i])).collect();
    let columns: Vec<Vec<usize>> = par::map_range(steps, |k| {
        let az = spec.azimuth(k);
        reachable.iter().zip(&silhouettes).filter(|(_, s)| s.covers(az)).map(|(&i, _)| i).collect()
    });
    let per_channel = par::map_range(spec.channels, |ch| {
        let mut rng = stream(key.seed, key.frame, key.vehicle, Purpose::Lidar, ch as u64);
        let el = spec.elevation(ch);
        let (sin_el, cos_el) = el.sin_cos();
        let mut out = Vec::new();
        for (k, candidates) in columns.iter().enumerate() {
            let noise = match spec.noise {
                RangeNoise::Uniform => spec.range_noise * (2.0 * rng.random::<f64>() - 1.0),
                RangeNoise::Gaussian => spec.range_noise * rng.sample::<f64, _>(StandardNormal),
            };
            let (sin_az, cos_az) = spec.azimuth(k).sin_cos();
            let d = [cos_el * cos_az, cos_el * sin_az, sin_el];
            let mut best: Option<(f64, Hit)> = None;
            for &i in candidates {
                if let Some(t) = ray_box_entry(origin, d, &boxes[i]) {
                    if best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, Hit::Box(i)));
                    }
                }
            }
            if spec.ground && d[2] < 0.0 {
                let t = -origin[2] / d[2];
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, Hit::Ground));
                }
            }
            let Some((t, hit)) = best else { continue };
            if t > spec.max_range {
                continue;
            }
            let r = t + noise;
            let round = |v: f64| v as f32 as f64;
            let intensity = if hit == Hit::Ground { GROUND_INTENSITY } else { VEHICLE_INTENSITY };
            out.push((Point::new(round(d[0] * r), round(d[1] * r), round(origin[2] + d[2] * r), intensity), hit));
        }
        out
    });
    per_channel.into_iter().flatten().collect()
}

/// Ray-casts world-frame `boxes` from a sensor mounted on the vehicle at
/// `vehicle_pose`. The caller leaves the sensor's own box out of `boxes`.
/// The cloud is in the vehicle frame.
pub fn raycast_lidar(boxes: &[OrientedBox], vehicle_pose: &Pose, spec: &SensorSpec, key: SweepKey) -> PointCloud {
    let to_local = vehicle_pose.inverse();
    let local: Vec<OrientedBox> = boxes.iter().map(|b| b.transformed(&to_local)).collect();
    let points = sweep(&local, spec, key).into_iter().map(|(p, _)| p).collect();
    PointCloud::new(points).expect("ray-cast points are finite")
}

/// Distance from `p` to the surface of `b`.
pub fn distance_to_surface(p: &Point, b: &OrientedBox) -> f64 {
    let local = b.to_local(&p.position());
    let q = [local.x.abs() - b.l / 2.0, local.y.abs() - b.w / 2.0, local.z.abs() - b.h / 2.0];
    let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
    let inside = q[0].max(q[1]).max(q[2]).min(0.0);
    outside + inside.abs()
}
