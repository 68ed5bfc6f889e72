//! Baseline late fusion: cascaded Hungarian matching of received detections
//! against the ego detections (2 m gate), then confidence-weighted box fusion
//! of every matched cluster.

mod hungarian;

use std::collections::BTreeMap;

pub use hungarian::{assignment_cost, hungarian, Assignment};

use crate::cpm::{to_ego_frame, CpmMessage, Detection};
use crate::geometry::{normalize_angle, OrientedBox, Pose};
use crate::par;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LateFusionError {
    #[error("cost matrix row {row} has {found} entries, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
}

/// Where a cluster member came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Ego,
    Vehicle(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterMember {
    pub source: Source,
    pub detection: Detection,
}

/// Detections judged to be the same object. The first member is the anchor
/// that later members were matched against.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchCluster {
    pub members: Vec<ClusterMember>,
}

impl MatchCluster {
    fn seed(source: Source, detection: Detection) -> Self {
        Self { members: vec![ClusterMember { source, detection }] }
    }

    pub fn anchor(&self) -> &Detection {
        &self.members[0].detection
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMode {
    /// Euclidean distance between 3D box centers.
    #[default]
    Center3d,
    /// Distance between box centers in the ground plane.
    Bev,
}

impl DistanceMode {
    pub fn distance(&self, a: &OrientedBox, b: &OrientedBox) -> f64 {
        match self {
            Self::Center3d => a.center().distance(&b.center()),
            Self::Bev => a.center().bev_distance(&b.center()),
        }
    }
}

/// How the fused confidence is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusedConfidence {
    /// Arithmetic mean of member confidences.
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateFusionConfig {
    pub max_dist: f64,
    pub distance: DistanceMode,
    pub confidence: FusedConfidence,
}

impl Default for LateFusionConfig {
    fn default() -> Self {
        Self { max_dist: 2.0, distance: DistanceMode::Center3d, confidence: FusedConfidence::Mean }
    }
}

/// Matches `dets` against the anchors of `clusters`; matched detections join
/// their cluster, the rest are returned.
fn match_into(
    clusters: &mut [MatchCluster],
    source: Source,
    dets: &[Detection],
    cfg: &LateFusionConfig,
) -> Vec<Detection> {
    if clusters.is_empty() || dets.is_empty() {
        return dets.to_vec();
    }
    let cost: Vec<Vec<f64>> = clusters
        .iter()
        .map(|c| dets.iter().map(|d| cfg.distance.distance(&c.anchor().bbox, &d.bbox)).collect())
        .collect();
    let pairs = hungarian(&cost, cfg.max_dist).expect("distances are finite and rows equal length");
    let mut matched = vec![false; dets.len()];
    for (ci, di) in pairs {
        matched[di] = true;
        clusters[ci].members.push(ClusterMember { source, detection: dets[di] });
    }
    dets.iter().zip(matched).filter(|(_, m)| !m).map(|(d, _)| *d).collect()
}

/// Two-stage cascade.
///
/// Stage 1: each ego detection seeds a cluster; vehicles, in ascending id
/// order, are matched against those clusters. Stage 2: each vehicle's
/// leftovers are matched against clusters seeded by earlier vehicles'
/// leftovers, and whatever stays unmatched seeds new clusters. Every input
/// detection ends up in exactly one cluster.
pub fn cascade_match(
    ego: &[Detection],
    coop: &BTreeMap<u32, Vec<Detection>>,
    cfg: &LateFusionConfig,
) -> Vec<MatchCluster> {
    let mut stage1: Vec<MatchCluster> = ego.iter().map(|d| MatchCluster::seed(Source::Ego, *d)).collect();
    let leftovers: Vec<(u32, Vec<Detection>)> = coop
        .iter()
        .map(|(&id, dets)| (id, match_into(&mut stage1, Source::Vehicle(id), dets, cfg)))
        .collect();
    let mut stage2: Vec<MatchCluster> = Vec::new();
    for (id, dets) in leftovers {
        let source = Source::Vehicle(id);
        let unmatched = match_into(&mut stage2, source, &dets, cfg);
        stage2.extend(unmatched.into_iter().map(|d| MatchCluster::seed(source, d)));
    }
    stage1.extend(stage2);
    stage1
}

/// Confidence-weighted fusion of one cluster.
///
/// Center and extents are confidence-weighted means, yaw is the weighted
/// circular mean, the class is the majority class (lowest id on ties). With
/// all-zero confidences the weights fall back to uniform and the fused
/// confidence is 0.
///
/// # Panics
///
/// On an empty cluster.
pub fn wbf_fuse(cluster: &MatchCluster, mode: FusedConfidence) -> Detection {
    let members = &cluster.members;
    assert!(!members.is_empty(), "cannot fuse an empty cluster");
    if members.len() == 1 {
        return members[0].detection;
    }
    let total: f64 = members.iter().map(|m| m.detection.confidence).sum();
    let uniform = total <= 0.0;
    let weight = |d: &Detection| if uniform { 1.0 } else { d.confidence };
    let norm: f64 = members.iter().map(|m| weight(&m.detection)).sum();
    let mut acc = [0.0f64; 8];
    for m in members {
        let d = &m.detection;
        let w = weight(d);
        let b = &d.bbox;
        let (s, c) = b.yaw.sin_cos();
        for (slot, v) in acc.iter_mut().zip([b.cx, b.cy, b.cz, b.l, b.w, b.h, s, c]) {
            *slot += w * v;
        }
    }
    let bbox = OrientedBox {
        cx: acc[0] / norm,
        cy: acc[1] / norm,
        cz: acc[2] / norm,
        l: acc[3] / norm,
        w: acc[4] / norm,
        h: acc[5] / norm,
        yaw: normalize_angle(acc[6].atan2(acc[7])),
    };
    let confidence = if uniform {
        0.0
    } else {
        match mode {
            FusedConfidence::Mean => total / members.len() as f64,
            FusedConfidence::Max => members.iter().map(|m| m.detection.confidence).fold(0.0, f64::max),
        }
    };
    let mut votes: BTreeMap<u16, usize> = BTreeMap::new();
    for m in members {
        *votes.entry(m.detection.class_id).or_default() += 1;
    }
    let best = votes.values().copied().max().unwrap_or(0);
    let class_id = votes.iter().find(|(_, &n)| n == best).map(|(&c, _)| c).unwrap_or(0);
    Detection { bbox, class_id, confidence: confidence.clamp(0.0, 1.0) }
}

/// Stable sort by descending confidence.
pub fn sort_by_confidence(dets: &mut [Detection]) {
    dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
}

/// Received detections grouped by sender and mapped into the ego frame.
pub fn collective_by_sender(cpms: &[CpmMessage], ego_pose: &Pose) -> BTreeMap<u32, Vec<Detection>> {
    let mut by_sender: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for msg in cpms {
        by_sender.entry(msg.sender_id).or_default().extend(to_ego_frame(msg, ego_pose));
    }
    by_sender
}

/// Full late fusion for one frame: transform, cascade-match, fuse, sort.
pub fn late_fuse(ego: &[Detection], cpms: &[CpmMessage], ego_pose: &Pose, cfg: &LateFusionConfig) -> Vec<Detection> {
    let coop = collective_by_sender(cpms, ego_pose);
    late_fuse_grouped(ego, &coop, cfg)
}

/// [`late_fuse`] for detections already in the ego frame.
pub fn late_fuse_grouped(ego: &[Detection], coop: &BTreeMap<u32, Vec<Detection>>, cfg: &LateFusionConfig) -> Vec<Detection> {
    let clusters = cascade_match(ego, coop, cfg);
    let mut fused = par::map(&clusters, |c| wbf_fuse(c, cfg.confidence));
    sort_by_confidence(&mut fused);
    fused
}
