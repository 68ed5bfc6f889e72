use super::proposals::Proposal;
use super::FusionError;
use crate::cpm::Detection;
use crate::geometry::{iou_bev, OrientedBox};
use crate::par;
use crate::sampling::Point;

/// Parameters of the analytic second stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    /// ρ ≥ 1: support is gathered inside the proposal box scaled by ρ.
    pub support_factor: f64,
    /// n₀ > 0: density scale of the support term `1 − exp(−n/n₀)`.
    pub density_scale: f64,
    /// α ∈ [0, 1]: weight of the objectness score.
    pub mix: f64,
    /// Move (cx, cy) to the BEV centroid of the supporting points.
    pub recenter: bool,
    /// Points lower than `z_min + ground_clearance` of the unscaled box are
    /// not counted as support. 0 disables the filter.
    pub ground_clearance: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self { support_factor: 1.2, density_scale: 10.0, mix: 0.5, recenter: true, ground_clearance: 0.0 }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.support_factor >= 1.0 && self.support_factor.is_finite()) {
            return Err(FusionError::BadParameter(format!("support factor must be >= 1, got {}", self.support_factor)));
        }
        if !(self.density_scale > 0.0 && self.density_scale.is_finite()) {
            return Err(FusionError::BadParameter(format!("density scale must be > 0, got {}", self.density_scale)));
        }
        if !(0.0..=1.0).contains(&self.mix) {
            return Err(FusionError::BadParameter(format!("mix weight must be in [0, 1], got {}", self.mix)));
        }
        if !(self.ground_clearance >= 0.0 && self.ground_clearance.is_finite()) {
            return Err(FusionError::BadParameter(format!("ground clearance must be >= 0, got {}", self.ground_clearance)));
        }
        Ok(())
    }

    /// `α·objectness + (1−α)·(1 − exp(−n/n₀))`.
    pub fn score(&self, objectness: f64, support: usize) -> f64 {
        let density = if support == 0 { 0.0 } else { 1.0 - (-(support as f64) / self.density_scale).exp() };
        (self.mix * objectness + (1.0 - self.mix) * density).clamp(0.0, 1.0)
    }
}

/// Points of `support` backing `bbox`: inside the ρ-scaled box and, when a
/// clearance is set, above the box floor by at least that much.
pub fn supporting_points<'a>(bbox: &OrientedBox, support: &'a [Point], params: &RefineParams) -> Vec<&'a Point> {
    let grown = bbox.scaled(params.support_factor);
    let r = grown.bev_circumradius();
    let floor = bbox.z_min() + params.ground_clearance;
    support
        .iter()
        .filter(|p| {
            (p.x - grown.cx).abs() <= r
                && (p.y - grown.cy).abs() <= r
                && (params.ground_clearance == 0.0 || p.z >= floor)
                && grown.contains(&p.position())
        })
        .collect()
}

/// Scores and optionally recenters each proposal from the points around it.
/// Unsupported proposals keep only the objectness term, so received boxes in
/// empty space never score above `α·objectness`.
pub fn refine_proposals(proposals: &[Proposal], support: &[Point], params: &RefineParams) -> Result<Vec<Detection>, FusionError> {
    params.validate()?;
    Ok(par::map(proposals, |p| {
        let gathered = supporting_points(&p.bbox, support, params);
        let n = gathered.len();
        let mut bbox = p.bbox;
        if params.recenter && n > 0 {
            let (sx, sy) = gathered.iter().fold((0.0, 0.0), |(sx, sy), q| (sx + q.x, sy + q.y));
            bbox.cx = sx / n as f64;
            bbox.cy = sy / n as f64;
        }
        Detection { bbox, class_id: 0, confidence: params.score(p.objectness, n) }
    }))
}

/// Greedy non-maximum suppression on BEV IoU. Detections are visited by
/// descending confidence (stable); a detection is dropped when it overlaps an
/// already kept one by more than `iou_threshold`.
pub fn nms_bev(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = dets[i];
        if kept.iter().all(|k| iou_bev(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::proposals::ProposalOrigin;

    fn proposal(cx: f64, cy: f64, obj: f64) -> Proposal {
        Proposal { bbox: OrientedBox::new(cx, cy, 0.8, 4.0, 2.0, 1.6, 0.0).unwrap(), objectness: obj, origin: ProposalOrigin::Local }
    }

    fn cluster(cx: f64, cy: f64) -> Vec<Point> {
        let mut pts = Vec::new();
        for i in -3..=3 {
            for j in -2..=2 {
                pts.push(Point::new(cx + 0.4 * i as f64, cy + 0.3 * j as f64, 0.8, 1.0));
            }
        }
        pts
    }

    #[test]
    fn dense_cluster_recenters_to_centroid() {
        let pts = cluster(10.3, -2.2);
        let out = refine_proposals(&[proposal(10.0, -2.0, 0.8)], &pts, &RefineParams::default()).unwrap();
        let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
        assert!((out[0].bbox.cx - mx / pts.len() as f64).abs() < 1e-12);
        assert!((out[0].bbox.cy - my / pts.len() as f64).abs() < 1e-12);
        assert_eq!(out[0].bbox.cz, 0.8);
        assert_eq!((out[0].bbox.l, out[0].bbox.w, out[0].bbox.h, out[0].bbox.yaw), (4.0, 2.0, 1.6, 0.0));
        let expected = 0.5 * 0.8 + 0.5 * (1.0 - (-(pts.len() as f64) / 10.0).exp());
        assert!((out[0].confidence - expected).abs() < 1e-15);
    }

    #[test]
    fn empty_space_keeps_objectness_term() {
        let out = refine_proposals(&[proposal(0.0, 0.0, 0.9)], &cluster(40.0, 0.0), &RefineParams::default()).unwrap();
        assert!((out[0].confidence - 0.45).abs() < 1e-15);
        assert_eq!(out[0].bbox.cx, 0.0);
    }

    #[test]
    fn asymptote() {
        let params = RefineParams::default();
        assert!((params.score(0.6, 100_000) - (0.5 * 0.6 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn ground_clearance_filters_floor_points() {
        let ground: Vec<Point> = (0..20).map(|i| Point::new(-1.5 + 0.15 * i as f64, 0.0, 0.01, 0.2)).collect();
        let params = RefineParams { ground_clearance: 0.3, recenter: false, ..Default::default() };
        let out = refine_proposals(&[proposal(0.0, 0.0, 0.9)], &ground, &params).unwrap();
        assert!((out[0].confidence - 0.45).abs() < 1e-15);
        let open = RefineParams { ground_clearance: 0.0, ..params };
        assert!(refine_proposals(&[proposal(0.0, 0.0, 0.9)], &ground, &open).unwrap()[0].confidence > 0.45);
    }

    #[test]
    fn support_uses_scaled_box() {
        // 2.2 m ahead of center: outside the 4 m box, inside the 4.8 m one.
        let pts = vec![Point::new(2.2, 0.0, 0.8, 1.0)];
        let out = refine_proposals(&[proposal(0.0, 0.0, 0.0)], &pts, &RefineParams { recenter: false, ..Default::default() }).unwrap();
        assert!(out[0].confidence > 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        for p in [
            RefineParams { support_factor: 0.9, ..Default::default() },
            RefineParams { density_scale: 0.0, ..Default::default() },
            RefineParams { mix: 1.5, ..Default::default() },
        ] {
            assert!(refine_proposals(&[], &[], &p).is_err());
        }
    }

    #[test]
    fn nms_keeps_best_of_overlapping() {
        let mk = |cx: f64, c: f64| Detection::car(OrientedBox::new(cx, 0.0, 0.8, 4.0, 2.0, 1.6, 0.0).unwrap(), c);
        let out = nms_bev(&[mk(0.0, 0.5), mk(0.3, 0.9), mk(10.0, 0.7)], 0.1);
        assert_eq!(out.iter().map(|d| d.confidence).collect::<Vec<_>>(), vec![0.9, 0.7]);
    }
}
