use crate::cpm::Detection;
use crate::par;
use crate::sampling::{Point, PointCloud};

/// A LiDAR return with one extra channel: the summed confidence of every
/// collective detection whose box contains it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecoratedPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
    pub sigma_conf: f64,
}

impl DecoratedPoint {
    pub fn plain(p: &Point) -> Self {
        Self { x: p.x, y: p.y, z: p.z, intensity: p.intensity, sigma_conf: 0.0 }
    }
}

/// Appends the Σconf channel. Point order and the original channels are
/// unchanged.
pub fn decorate_points(cloud: &PointCloud, dets: &[Detection]) -> Vec<DecoratedPoint> {
    const CHUNK: usize = 4096;
    let points = cloud.points();
    let radii: Vec<f64> = dets.iter().map(|d| d.bbox.bev_circumradius()).collect();
    let chunks = points.len().div_ceil(CHUNK);
    par::map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(points.len());
        points[lo..hi]
            .iter()
            .map(|p| {
                let pos = p.position();
                let mut sigma = 0.0;
                for (d, &r) in dets.iter().zip(&radii) {
                    let b = &d.bbox;
                    if (p.x - b.cx).abs() <= r && (p.y - b.cy).abs() <= r && b.contains(&pos) {
                        sigma += d.confidence;
                    }
                }
                DecoratedPoint { sigma_conf: sigma, ..DecoratedPoint::plain(p) }
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// The cloud with a zero Σconf channel.
pub fn undecorated(cloud: &PointCloud) -> Vec<DecoratedPoint> {
    cloud.points().iter().map(DecoratedPoint::plain).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrientedBox;

    fn cloud(pts: &[(f64, f64, f64)]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&(x, y, z)| Point::new(x, y, z, 0.5)).collect()).unwrap()
    }

    fn det(cx: f64, cy: f64, conf: f64) -> Detection {
        Detection::car(OrientedBox::new(cx, cy, 0.0, 4.0, 2.0, 2.0, 0.3).unwrap(), conf)
    }

    #[test]
    fn no_detections_zero_channel() {
        let c = cloud(&[(0.0, 0.0, 0.0), (5.0, 1.0, 0.2)]);
        assert!(decorate_points(&c, &[]).iter().all(|p| p.sigma_conf == 0.0));
    }

    #[test]
    fn overlapping_boxes_sum() {
        let c = cloud(&[(0.5, 0.0, 0.0), (30.0, 0.0, 0.0)]);
        let out = decorate_points(&c, &[det(0.0, 0.0, 0.6), det(1.0, 0.0, 0.3), det(-20.0, 0.0, 0.9)]);
        // brute-force membership loop
        let expected: f64 = [det(0.0, 0.0, 0.6), det(1.0, 0.0, 0.3), det(-20.0, 0.0, 0.9)]
            .iter()
            .filter(|d| d.bbox.contains(&c.points()[0].position()))
            .map(|d| d.confidence)
            .sum();
        assert!((expected - 0.9).abs() < 1e-15);
        assert_eq!(out[0].sigma_conf, expected);
        assert_eq!(out[1].sigma_conf, 0.0);
    }

    #[test]
    fn keeps_original_channels() {
        let c = cloud(&[(0.1, 0.2, 0.3), (7.0, 8.0, 9.0)]);
        let out = decorate_points(&c, &[det(0.0, 0.0, 0.5)]);
        for (a, b) in out.iter().zip(c.points()) {
            assert_eq!((a.x, a.y, a.z, a.intensity), (b.x, b.y, b.z, b.intensity));
        }
    }
}
