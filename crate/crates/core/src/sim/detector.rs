use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::config::DetectorNoiseModel;
use super::scene::{CAR_HEIGHT, CAR_LENGTH, CAR_WIDTH};
use crate::cpm::Detection;
use crate::geometry::{normalize_angle, OrientedBox};
use crate::sampling::Point;

/// Interior point count of each box. Boxes are grown by `margin` on the sides
/// and lifted by it, so ground returns under the floor stay out.
pub fn interior_counts(cloud: &[Point], boxes: &[OrientedBox], margin: f64) -> Vec<usize> {
    boxes
        .iter()
        .map(|b| {
            let grown = OrientedBox { cz: b.cz + margin, l: b.l + 2.0 * margin, w: b.w + 2.0 * margin, ..*b };
            let r = grown.bev_circumradius();
            cloud
                .iter()
                .filter(|p| (p.x - grown.cx).abs() <= r && (p.y - grown.cy).abs() <= r && grown.contains(&p.position()))
                .count()
        })
        .collect()
}

/// `1 − exp(−n/n₀)`.
pub fn confidence_for(n: usize, n0: f64) -> f64 {
    1.0 - (-(n as f64) / n0).exp()
}

/// Emulated detector output for one sweep, in the sensor's vehicle frame.
///
/// Each box with at least m₀ interior points yields a detection with
/// Gaussian-perturbed center, extents and yaw. Then Poisson(λ) false
/// positives are placed uniformly in a disc around the sensor. Every box
/// consumes its noise draws whether or not it is detected.
pub fn emulate_detector<R: Rng>(cloud: &[Point], gt: &[OrientedBox], noise: &DetectorNoiseModel, rng: &mut R) -> Vec<Detection> {
    let counts = interior_counts(cloud, gt, noise.interior_margin);
    let mut out = Vec::new();
    for (b, &n) in gt.iter().zip(&counts) {
        let mut z = [0.0f64; 7];
        for v in &mut z {
            *v = rng.sample(StandardNormal);
        }
        if n < noise.min_points.max(1) {
            continue;
        }
        let c = noise.center_sigma;
        let d = noise.dim_sigma;
        let bbox = OrientedBox {
            cx: b.cx + c * z[0],
            cy: b.cy + c * z[1],
            cz: b.cz + c * z[2],
            l: (b.l + d * z[3]).max(0.1),
            w: (b.w + d * z[4]).max(0.1),
            h: (b.h + d * z[5]).max(0.1),
            yaw: normalize_angle(b.yaw + noise.yaw_sigma * z[6]),
        };
        out.push(Detection { bbox, class_id: 0, confidence: confidence_for(n, noise.confidence_scale) });
    }
    let fp_count = if noise.false_positive_rate > 0.0 {
        Poisson::new(noise.false_positive_rate).map(|p| p.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };
    for _ in 0..fp_count {
        let r = noise.false_positive_radius * rng.random::<f64>().sqrt();
        let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let l = rng.random_range(CAR_LENGTH.0..=CAR_LENGTH.1);
        let w = rng.random_range(CAR_WIDTH.0..=CAR_WIDTH.1);
        let h = rng.random_range(CAR_HEIGHT.0..=CAR_HEIGHT.1);
        let yaw = normalize_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let bbox = OrientedBox { cx: r * phi.cos(), cy: r * phi.sin(), cz: h / 2.0, l, w, h, yaw };
        out.push(Detection { bbox, class_id: 0, confidence: rng.random_range(0.1..=0.5) });
    }
    out
}
