//! Keypoint sampling: farthest-point sampling (FPS), scene-centered sector
//! partitioning, and the two sectorized samplers built on them: proposal
//! centric (radius gate around proposal centers) and collective box (only
//! points inside received boxes).
//!
//! Sectors are sampled independently and concatenated in ascending sector
//! order, so running them concurrently does not change the result.

use std::f64::consts::{PI, TAU};

use crate::geometry::{OrientedBox, Point2, Point3};
use crate::par;

/// One LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    #[inline]
    fn dist_sq(&self, o: &Point) -> f64 {
        let (dx, dy, dz) = (self.x - o.x, self.y - o.y, self.z - o.z);
        dx * dx + dy * dy + dz * dz
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("start index {start} out of range for {len} points")]
    StartOutOfRange { start: usize, len: usize },
    #[error("sector count must be at least 1")]
    NoSectors,
    #[error("sampling radius must be positive, got {0}")]
    BadRadius(f64),
}

/// A finite point cloud.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self, SamplingError> {
        if let Some(index) = points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite() && p.intensity.is_finite()))
        {
            return Err(SamplingError::NonFinite { index });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// The points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Vec<Point> {
        indices.iter().map(|&i| self.points[i]).collect()
    }
}

/// FPS over the whole cloud starting at `start`.
///
/// Returns `min(k, n)` distinct indices. Ties go to the lowest index.
pub fn farthest_point_sampling(cloud: &PointCloud, k: usize, start: usize) -> Result<Vec<usize>, SamplingError> {
    let n = cloud.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if start >= n {
        return Err(SamplingError::StartOutOfRange { start, len: n });
    }
    let all: Vec<usize> = (0..n).collect();
    Ok(fps_on(cloud.points(), &all, k, start))
}

/// FPS restricted to `candidates` (ascending), starting at `candidates[start_pos]`.
fn fps_on(points: &[Point], candidates: &[usize], k: usize, start_pos: usize) -> Vec<usize> {
    let m = candidates.len();
    let k = k.min(m);
    if k == 0 {
        return Vec::new();
    }
    let local: Vec<Point> = candidates.iter().map(|&i| points[i]).collect();
    let mut min_d = vec![f64::INFINITY; m];
    let mut taken = vec![false; m];
    let mut out = Vec::with_capacity(k);
    let mut current = start_pos;
    loop {
        taken[current] = true;
        out.push(candidates[current]);
        if out.len() == k {
            break;
        }
        let anchor = local[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for j in 0..m {
            if taken[j] {
                continue;
            }
            let d = anchor.dist_sq(&local[j]);
            if d < min_d[j] {
                min_d[j] = d;
            }
            if min_d[j] > best_d {
                best_d = min_d[j];
                best = j;
            }
        }
        current = best;
    }
    out
}

/// Candidate indices split into angular sectors around `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorPartition {
    pub center: Point2,
    pub sectors: Vec<Vec<usize>>,
}

impl SectorPartition {
    pub fn sector_count(&self) -> usize {
        self.sectors.len()
    }
}

/// Sector index of `(x, y)`: `floor(S·(θ+π)/2π)` clamped to `S−1`, with the
/// angle of the center itself pinned to 0.
pub fn sector_of(x: f64, y: f64, center: Point2, sectors: usize) -> usize {
    let (dx, dy) = (x - center.x, y - center.y);
    let theta = if dx == 0.0 && dy == 0.0 { 0.0 } else { dy.atan2(dx) };
    let bin = (sectors as f64 * (theta + PI) / TAU).floor();
    (bin.max(0.0) as usize).min(sectors - 1)
}

fn partition(points: &[Point], candidates: &[usize], sectors: usize, center: Point2) -> SectorPartition {
    let mut bins = vec![Vec::new(); sectors];
    for &i in candidates {
        bins[sector_of(points[i].x, points[i].y, center, sectors)].push(i);
    }
    SectorPartition { center, sectors: bins }
}

/// Partitions every point of `cloud` into `sectors` angular bins.
pub fn sectorize(cloud: &PointCloud, sectors: usize, center: Point2) -> Result<SectorPartition, SamplingError> {
    if sectors == 0 {
        return Err(SamplingError::NoSectors);
    }
    let all: Vec<usize> = (0..cloud.len()).collect();
    Ok(partition(cloud.points(), &all, sectors, center))
}

/// Round-robin balanced quotas: every pass hands one more keypoint to each
/// sector that still has unsampled points, in index order, until
/// `min(k, Σ sizes)` keypoints are assigned. With enough points everywhere
/// this is `floor(k/S)` each plus one for the first `k mod S` sectors; the
/// share of empty or exhausted sectors flows to the others.
pub fn sector_quotas(sizes: &[usize], k: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let mut remaining = k.min(total);
    let mut quotas = vec![0usize; sizes.len()];
    while remaining > 0 {
        let open: Vec<usize> = (0..sizes.len()).filter(|&s| quotas[s] < sizes[s]).collect();
        // Whole rounds first, capped by the smallest open capacity.
        let min_cap = open.iter().map(|&s| sizes[s] - quotas[s]).min().unwrap_or(0);
        let rounds = (remaining / open.len()).min(min_cap);
        if rounds > 0 {
            for &s in &open {
                quotas[s] += rounds;
            }
            remaining -= rounds * open.len();
            continue;
        }
        for &s in &open {
            if remaining == 0 {
                break;
            }
            quotas[s] += 1;
            remaining -= 1;
        }
    }
    quotas
}

fn sectorized_fps(points: &[Point], candidates: &[usize], k: usize, sectors: usize, center: Point2) -> Vec<usize> {
    if candidates.is_empty() || k == 0 {
        return Vec::new();
    }
    let part = partition(points, candidates, sectors, center);
    let sizes: Vec<usize> = part.sectors.iter().map(Vec::len).collect();
    let quotas = sector_quotas(&sizes, k);
    let work: Vec<(&Vec<usize>, usize)> = part.sectors.iter().zip(quotas).collect();
    par::map(&work, |(members, quota)| fps_on(points, members, *quota, 0))
        .into_iter()
        .flatten()
        .collect()
}

/// Indices `i` with `keep(points[i])`, ascending. Evaluated in parallel chunks.
fn filter_indices<F>(points: &[Point], keep: F) -> Vec<usize>
where
    F: Fn(&Point) -> bool + Sync + Send,
{
    const CHUNK: usize = 4096;
    let chunks = points.len().div_ceil(CHUNK);
    par::map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(points.len());
        (lo..hi).filter(|&i| keep(&points[i])).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

fn mean_center(boxes: &[OrientedBox]) -> Point2 {
    let n = boxes.len() as f64;
    let (sx, sy) = boxes.iter().fold((0.0, 0.0), |(sx, sy), b| (sx + b.cx, sy + b.cy));
    Point2::new(sx / n, sy / n)
}

/// Points within BEV distance `radius` of any proposal center.
pub fn radius_candidates(cloud: &PointCloud, proposals: &[OrientedBox], radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    filter_indices(cloud.points(), |p| {
        proposals.iter().any(|b| {
            let (dx, dy) = (p.x - b.cx, p.y - b.cy);
            dx * dx + dy * dy <= r2
        })
    })
}

/// Points inside at least one box.
pub fn box_candidates(cloud: &PointCloud, boxes: &[OrientedBox]) -> Vec<usize> {
    let radii: Vec<f64> = boxes.iter().map(OrientedBox::bev_circumradius).collect();
    filter_indices(cloud.points(), |p| {
        let pos = p.position();
        boxes.iter().zip(&radii).any(|(b, &r)| {
            (p.x - b.cx).abs() <= r && (p.y - b.cy).abs() <= r && b.contains(&pos)
        })
    })
}

/// Sectorized proposal-centric sampling.
///
/// Candidates are points within `radius` (BEV) of a proposal center; they are
/// sectorized around the mean proposal center and each sector runs FPS on its
/// quota.
pub fn spc_sample(
    cloud: &PointCloud,
    proposals: &[OrientedBox],
    radius: f64,
    k: usize,
    sectors: usize,
) -> Result<Vec<usize>, SamplingError> {
    if !(radius > 0.0) {
        return Err(SamplingError::BadRadius(radius));
    }
    if sectors == 0 {
        return Err(SamplingError::NoSectors);
    }
    if proposals.is_empty() || k == 0 {
        return Ok(Vec::new());
    }
    let candidates = radius_candidates(cloud, proposals, radius);
    Ok(sectorized_fps(cloud.points(), &candidates, k, sectors, mean_center(proposals)))
}

/// Sectorized collective-box sampling: like [`spc_sample`] but candidates
/// are the points inside any of `boxes`.
pub fn scb_sample(cloud: &PointCloud, boxes: &[OrientedBox], k: usize, sectors: usize) -> Result<Vec<usize>, SamplingError> {
    if sectors == 0 {
        return Err(SamplingError::NoSectors);
    }
    if boxes.is_empty() || k == 0 {
        return Ok(Vec::new());
    }
    let candidates = box_candidates(cloud, boxes);
    Ok(sectorized_fps(cloud.points(), &candidates, k, sectors, mean_center(boxes)))
}
