//! KITTI-style 3D average precision with 40-point recall interpolation.

use std::fmt::Write as _;

use crate::cpm::Detection;
use crate::geometry::{iou_3d, OrientedBox};
use crate::par;

/// Thresholds reported by default, strictest first.
pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.7, 0.5];

/// Number of recall sample points.
pub const RECALL_POINTS: usize = 40;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no ground truth boxes; average precision is undefined")]
    NoGroundTruth,
    #[error("frame count mismatch: {detections} detection frames, {ground_truth} ground-truth frames")]
    FrameMismatch { detections: usize, ground_truth: usize },
    #[error("IoU threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
}

/// TP/FP outcome of one frame at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameEval {
    /// (confidence, is true positive), in detection input order.
    pub scored: Vec<(f64, bool)>,
    pub num_gt: usize,
}

impl FrameEval {
    pub fn tp(&self) -> usize {
        self.scored.iter().filter(|(_, tp)| *tp).count()
    }

    pub fn fp(&self) -> usize {
        self.scored.len() - self.tp()
    }

    pub fn fn_count(&self) -> usize {
        self.num_gt - self.tp()
    }
}

/// Greedy one-to-one matching. Detections are visited by descending
/// confidence (stable); each takes its best-IoU still unmatched ground truth
/// (lowest index on ties) if that IoU reaches `iou_thresh`.
pub fn assign_tp_fp(dets: &[Detection], gts: &[OrientedBox], iou_thresh: f64) -> FrameEval {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    let mut taken = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = iou_3d(&dets[i].bbox, gt);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, iou)) = best {
            if iou >= iou_thresh {
                taken[g] = true;
                tp[i] = true;
            }
        }
    }
    FrameEval { scored: dets.iter().zip(tp).map(|(d, t)| (d.confidence, t)).collect(), num_gt: gts.len() }
}

/// One point of the precision/recall sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub confidence: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Pools all frames, sorts by descending confidence (stable, frame order
/// first) and returns the cumulative precision/recall after each detection.
pub fn pr_curve(frames: &[FrameEval]) -> Result<Vec<PrPoint>, EvalError> {
    let total_gt: usize = frames.iter().map(|f| f.num_gt).sum();
    if total_gt == 0 {
        return Err(EvalError::NoGroundTruth);
    }
    let mut pooled: Vec<(f64, bool)> = frames.iter().flat_map(|f| f.scored.iter().copied()).collect();
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    Ok(pooled
        .iter()
        .enumerate()
        .map(|(i, &(confidence, is_tp))| {
            tp += usize::from(is_tp);
            PrPoint { confidence, recall: tp as f64 / total_gt as f64, precision: tp as f64 / (i + 1) as f64 }
        })
        .collect())
}

/// AP in percent from a PR sweep: mean over r ∈ {1/40, …, 1} of the best
/// precision reached at recall ≥ r (0 where r is never reached).
pub fn ap_from_curve(curve: &[PrPoint]) -> f64 {
    // Suffix maxima give the interpolated precision envelope.
    let mut envelope = vec![0.0f64; curve.len()];
    let mut best = 0.0f64;
    for (i, p) in curve.iter().enumerate().rev() {
        best = best.max(p.precision);
        envelope[i] = best;
    }
    let mut sum = 0.0;
    let mut j = 0usize;
    for k in 1..=RECALL_POINTS {
        let r = k as f64 / RECALL_POINTS as f64;
        while j < curve.len() && curve[j].recall < r {
            j += 1;
        }
        if j < curve.len() {
            sum += envelope[j];
        }
    }
    100.0 * sum / RECALL_POINTS as f64
}

/// AP@R40 in percent over all frames.
pub fn ap_r40(frames: &[FrameEval]) -> Result<f64, EvalError> {
    Ok(ap_from_curve(&pr_curve(frames)?))
}

/// Result at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub iou_thresh: f64,
    pub ap_percent: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub pr: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub thresholds: Vec<ThresholdReport>,
}

impl EvalReport {
    pub fn at(&self, iou_thresh: f64) -> Option<&ThresholdReport> {
        self.thresholds.iter().find(|t| t.iou_thresh == iou_thresh)
    }

    /// AP at `iou_thresh`, or NaN if that threshold was not evaluated.
    pub fn ap(&self, iou_thresh: f64) -> f64 {
        self.at(iou_thresh).map_or(f64::NAN, |t| t.ap_percent)
    }

    /// Summary rows without header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for t in &self.thresholds {
            let _ = writeln!(out, "{},{},{:.4},{},{},{}", self.method, t.iou_thresh, t.ap_percent, t.tp, t.fp, t.fn_count);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{SUMMARY_CSV_HEADER}\n{}", self.csv_rows())
    }

    /// Every PR point at every threshold.
    pub fn pr_csv(&self) -> String {
        let mut out = format!("{PR_CSV_HEADER}\n");
        for t in &self.thresholds {
            for p in &t.pr {
                let _ = writeln!(out, "{},{},{:.6},{:.6}", self.method, t.iou_thresh, p.recall, p.precision);
            }
        }
        out
    }
}

pub const SUMMARY_CSV_HEADER: &str = "method,iou_thresh,ap_percent,tp,fp,fn";
pub const PR_CSV_HEADER: &str = "method,iou_thresh,recall,precision";

/// Evaluates aligned per-frame detections against per-frame ground truth at
/// each threshold. Matching is redone per threshold.
pub fn evaluate(
    method: &str,
    detections: &[Vec<Detection>],
    ground_truth: &[Vec<OrientedBox>],
    thresholds: &[f64],
) -> Result<EvalReport, EvalError> {
    if detections.len() != ground_truth.len() {
        return Err(EvalError::FrameMismatch { detections: detections.len(), ground_truth: ground_truth.len() });
    }
    if let Some(&t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(EvalError::BadThreshold(t));
    }
    let frames: Vec<usize> = (0..detections.len()).collect();
    let mut reports = Vec::with_capacity(thresholds.len());
    for &iou_thresh in thresholds {
        let evals = par::map(&frames, |&f| assign_tp_fp(&detections[f], &ground_truth[f], iou_thresh));
        let pr = pr_curve(&evals)?;
        reports.push(ThresholdReport {
            iou_thresh,
            ap_percent: ap_from_curve(&pr),
            tp: evals.iter().map(FrameEval::tp).sum(),
            fp: evals.iter().map(FrameEval::fp).sum(),
            fn_count: evals.iter().map(FrameEval::fn_count).sum(),
            pr,
        });
    }
    Ok(EvalReport { method: method.to_string(), thresholds: reports })
}
