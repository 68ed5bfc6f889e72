//! Deterministic keypoint feature aggregation.
//!
//! The cube around a keypoint is split into `n³` sub-voxels. Raw point
//! channels and raw box encodings are averaged per sub-voxel and concatenated
//! in lexicographic (x, y, z) order.

use std::collections::HashMap;

use super::decorate::DecoratedPoint;
use super::FusionError;
use crate::cpm::Detection;
use crate::geometry::Point3;
use crate::par;

/// Channels of one raw box encoding: Δx, Δy, Δz, l, w, h, sin θ, cos θ, conf.
pub const RAW_BOX_CHANNELS: usize = 9;

/// Sub-voxel of an offset inside a cube of half side `half`, or `None` when
/// the offset lies outside the (closed) cube.
fn cell_index(d: [f64; 3], half: f64, n: usize) -> Option<usize> {
    let step = 2.0 * half / n as f64;
    let mut idx = 0;
    for v in d {
        if !(v.abs() <= half) {
            return None;
        }
        let i = (((v + half) / step).floor() as usize).min(n - 1);
        idx = idx * n + i;
    }
    Some(idx)
}

fn check_grid(grid_n: usize, half_extent: f64) -> Result<(), FusionError> {
    if grid_n == 0 {
        return Err(FusionError::BadParameter("grid_n must be at least 1".into()));
    }
    if !(half_extent > 0.0 && half_extent.is_finite()) {
        return Err(FusionError::BadParameter(format!("half extent must be positive, got {half_extent}")));
    }
    Ok(())
}

fn average_cells(sums: &mut [f64], counts: &[u32], channels: usize) {
    for (cell, &count) in counts.iter().enumerate() {
        if count > 1 {
            let inv = 1.0 / count as f64;
            for v in &mut sums[cell * channels..(cell + 1) * channels] {
                *v *= inv;
            }
        }
    }
}

/// Raw box features around `keypoint`: every detection whose center lies in
/// the cube contributes `(Δx, Δy, Δz, l, w, h, sin θ, cos θ, conf)` to its
/// sub-voxel; sub-voxels hold the mean. Length `grid_n³ · 9`.
pub fn assemble_raw_box_features(
    keypoint: &Point3,
    dets: &[Detection],
    half_extent: f64,
    grid_n: usize,
) -> Result<Vec<f64>, FusionError> {
    check_grid(grid_n, half_extent)?;
    Ok(raw_box_features_unchecked(keypoint, dets, half_extent, grid_n))
}

fn raw_box_features_unchecked(keypoint: &Point3, dets: &[Detection], half: f64, n: usize) -> Vec<f64> {
    let cells = n * n * n;
    let mut sums = vec![0.0; cells * RAW_BOX_CHANNELS];
    let mut counts = vec![0u32; cells];
    for d in dets {
        let b = &d.bbox;
        let delta = [b.cx - keypoint.x, b.cy - keypoint.y, b.cz - keypoint.z];
        let Some(cell) = cell_index(delta, half, n) else { continue };
        let (s, c) = b.yaw.sin_cos();
        let enc = [delta[0], delta[1], delta[2], b.l, b.w, b.h, s, c, d.confidence];
        for (acc, v) in sums[cell * RAW_BOX_CHANNELS..].iter_mut().zip(enc) {
            *acc += v;
        }
        counts[cell] += 1;
    }
    average_cells(&mut sums, &counts, RAW_BOX_CHANNELS);
    sums
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawBoxLayout {
    pub grid_n: usize,
    pub half_extent: f64,
}

/// Shape of a keypoint feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointLayout {
    pub point_grid_n: usize,
    pub point_half_extent: f64,
    /// Adds the Σconf channel to the point cells.
    pub decorated: bool,
    /// Raw box feature cells, when enabled.
    pub raw_box: Option<RawBoxLayout>,
}

impl Default for KeypointLayout {
    fn default() -> Self {
        Self { point_grid_n: 2, point_half_extent: 1.2, decorated: false, raw_box: None }
    }
}

impl KeypointLayout {
    pub fn point_channels(&self) -> usize {
        if self.decorated {
            5
        } else {
            4
        }
    }

    pub fn point_len(&self) -> usize {
        self.point_grid_n.pow(3) * self.point_channels()
    }

    pub fn box_len(&self) -> usize {
        self.raw_box.map_or(0, |r| r.grid_n.pow(3) * RAW_BOX_CHANNELS)
    }

    /// Total feature length.
    pub fn len(&self) -> usize {
        self.point_len() + self.box_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        check_grid(self.point_grid_n, self.point_half_extent)?;
        if let Some(r) = self.raw_box {
            check_grid(r.grid_n, r.half_extent)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFeatures {
    pub keypoint: Point3,
    pub features: Vec<f64>,
}

impl KeypointFeatures {
    pub fn is_zero(&self) -> bool {
        self.features.iter().all(|&v| v == 0.0)
    }
}

/// Uniform BEV bucket grid for neighborhood queries.
struct BevGrid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl BevGrid {
    fn new(points: &[DecoratedPoint], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p.x, p.y, cell)).or_default().push(i as u32);
        }
        Self { cell, buckets }
    }

    fn key(x: f64, y: f64, cell: f64) -> (i64, i64) {
        ((x / cell).floor() as i64, (y / cell).floor() as i64)
    }

    /// Indices of points in buckets overlapping the square of half side `r`.
    fn around(&self, x: f64, y: f64, r: f64) -> impl Iterator<Item = usize> + '_ {
        let (x0, y0) = Self::key(x - r, y - r, self.cell);
        let (x1, y1) = Self::key(x + r, y + r, self.cell);
        (x0..=x1)
            .flat_map(move |i| (y0..=y1).map(move |j| (i, j)))
            .filter_map(|k| self.buckets.get(&k))
            .flatten()
            .map(|&i| i as usize)
    }
}

/// Per keypoint: sub-voxel means of the neighbors' point channels (relative
/// position, intensity, Σconf when decorated), followed by the raw box
/// features when the layout enables them. The keypoint itself is not part of
/// its own neighborhood.
pub fn collect_keypoint_features(
    cloud: &[DecoratedPoint],
    keypoints: &[usize],
    dets: &[Detection],
    layout: &KeypointLayout,
) -> Result<Vec<KeypointFeatures>, FusionError> {
    layout.validate()?;
    if let Some(&bad) = keypoints.iter().find(|&&k| k >= cloud.len()) {
        return Err(FusionError::BadParameter(format!("keypoint index {bad} out of range for {} points", cloud.len())));
    }
    let half = layout.point_half_extent;
    let n = layout.point_grid_n;
    let channels = layout.point_channels();
    let grid = BevGrid::new(cloud, half);
    Ok(par::map(keypoints, |&k| {
        let kp = cloud[k];
        let cells = n * n * n;
        let mut sums = vec![0.0; cells * channels];
        let mut counts = vec![0u32; cells];
        // Buckets are visited in a fixed order, so the summation order is too.
        for i in grid.around(kp.x, kp.y, half).filter(|&i| i != k) {
            let p = cloud[i];
            let d = [p.x - kp.x, p.y - kp.y, p.z - kp.z];
            let Some(cell) = cell_index(d, half, n) else { continue };
            let slot = &mut sums[cell * channels..(cell + 1) * channels];
            slot[0] += d[0];
            slot[1] += d[1];
            slot[2] += d[2];
            slot[3] += p.intensity;
            if layout.decorated {
                slot[4] += p.sigma_conf;
            }
            counts[cell] += 1;
        }
        average_cells(&mut sums, &counts, channels);
        let keypoint = Point3::new(kp.x, kp.y, kp.z);
        if let Some(r) = layout.raw_box {
            sums.extend(raw_box_features_unchecked(&keypoint, dets, r.half_extent, r.grid_n));
        }
        KeypointFeatures { keypoint, features: sums }
    }))
}
