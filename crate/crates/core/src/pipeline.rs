//! Per-frame fusion pipeline: emulated ego detections, the enabled fusion
//! hooks, the analytic second stage and optional late fusion.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::config::{ConfigError, KeyValues, KvWriter};
use crate::cpm::Detection;
use crate::dataset::{DatasetDir, DatasetError};
use crate::eval::{evaluate, EvalError, EvalReport, DEFAULT_THRESHOLDS};
use crate::fusion::{
    collect_keypoint_features, decorate_points, inject_proposals, nms_bev, refine_proposals, undecorated, FusionError,
    KeypointFeatures, KeypointLayout, Proposal, RawBoxLayout, RefineParams,
};
use crate::geometry::OrientedBox;
use crate::late_fusion::{collective_by_sender, late_fuse_grouped, sort_by_confidence, DistanceMode, FusedConfidence, LateFusionConfig};
use crate::par;
use crate::sampling::{scb_sample, spc_sample, SamplingError};
use crate::sim::{detector_stream, emulate_detector, Dataset, FrameData, ScenarioConfig, EGO_ID};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("bad method: {0}")]
    Method(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Collective-proposal variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cpr {
    /// Proposals also steer keypoint sampling.
    Spc,
    /// Proposals only reach the second stage.
    Roi,
}

/// Which fusion hooks run. All off is the ego-only baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MethodSpec {
    pub pd: bool,
    pub cpr: Option<Cpr>,
    pub rbf: bool,
    pub cvsa: bool,
    pub late: bool,
}

impl MethodSpec {
    pub const BASELINE: Self = Self { pd: false, cpr: None, rbf: false, cvsa: false, late: false };

    pub fn is_baseline(&self) -> bool {
        *self == Self::BASELINE
    }

    /// Whether any received data is used.
    pub fn needs_cpms(&self) -> bool {
        !self.is_baseline()
    }

    fn needs_features(&self) -> bool {
        self.pd || self.rbf || self.cvsa
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.pd {
            parts.push("pd");
        }
        match self.cpr {
            Some(Cpr::Spc) => parts.push("cpr-spc"),
            Some(Cpr::Roi) => parts.push("cpr-roi"),
            None => {}
        }
        if self.rbf {
            parts.push("rbf");
        }
        if self.cvsa {
            parts.push("cvsa");
        }
        if self.late {
            parts.push("late");
        }
        if parts.is_empty() {
            f.write_str("baseline")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

impl FromStr for MethodSpec {
    type Err = PipelineError;

    /// Hook names joined by `,` or `+`; `baseline` (or `none`) alone means no
    /// hooks.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens: Vec<String> = s.split([',', '+']).map(|t| t.trim().to_ascii_lowercase()).collect();
        if tokens.iter().any(String::is_empty) {
            return Err(PipelineError::Method(format!("empty hook name in `{s}`")));
        }
        if tokens.len() == 1 && (tokens[0] == "baseline" || tokens[0] == "none") {
            return Ok(Self::BASELINE);
        }
        let mut m = Self::BASELINE;
        let mut seen = Vec::new();
        for t in &tokens {
            if seen.contains(t) {
                return Err(PipelineError::Method(format!("hook `{t}` given twice")));
            }
            seen.push(t.clone());
            let cpr = |m: &mut Self, v: Cpr| {
                if m.cpr.is_some() {
                    return Err(PipelineError::Method("cpr-spc and cpr-roi are mutually exclusive".into()));
                }
                m.cpr = Some(v);
                Ok(())
            };
            match t.as_str() {
                "pd" => m.pd = true,
                "cpr-spc" => cpr(&mut m, Cpr::Spc)?,
                "cpr-roi" => cpr(&mut m, Cpr::Roi)?,
                "rbf" => m.rbf = true,
                "cvsa" => m.cvsa = true,
                "late" => m.late = true,
                other => {
                    return Err(PipelineError::Method(format!(
                        "unknown hook `{other}` (expected pd, cpr-spc, cpr-roi, rbf, cvsa, late or baseline)"
                    )))
                }
            }
        }
        Ok(m)
    }
}

/// Pipeline tuning. Not part of the scenario: the same dataset can be fused
/// with different settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub refine: RefineParams,
    /// BEV IoU above which the second stage suppresses a lower-scored box.
    pub nms_iou: f64,
    pub spc_radius: f64,
    pub spc_keypoints: usize,
    pub scb_keypoints: usize,
    pub sectors: usize,
    /// Received detections closer than this (BEV) to the ego origin describe
    /// the ego vehicle itself and are dropped.
    pub self_radius: f64,
    pub late: LateFusionConfig,
    pub features: KeypointLayout,
    pub raw_box: RawBoxLayout,
    /// Run without any ego detections (for inspecting pure cooperative
    /// output).
    pub silence_ego: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            refine: RefineParams { recenter: false, ground_clearance: 0.3, ..RefineParams::default() },
            nms_iou: 0.1,
            spc_radius: 2.4,
            spc_keypoints: 2048,
            scb_keypoints: 1024,
            sectors: 6,
            self_radius: 2.5,
            late: LateFusionConfig::default(),
            features: KeypointLayout::default(),
            raw_box: RawBoxLayout { grid_n: 2, half_extent: 4.0 },
            silence_ego: false,
        }
    }
}

fn parse_distance(v: &str) -> Result<DistanceMode, String> {
    match v {
        "3d" => Ok(DistanceMode::Center3d),
        "bev" => Ok(DistanceMode::Bev),
        _ => Err(format!("expected `3d` or `bev`, got `{v}`")),
    }
}

fn parse_confidence(v: &str) -> Result<FusedConfidence, String> {
    match v {
        "mean" => Ok(FusedConfidence::Mean),
        "max" => Ok(FusedConfidence::Max),
        _ => Err(format!("expected `mean` or `max`, got `{v}`")),
    }
}

impl PipelineConfig {
    pub fn from_kv(kv: &mut KeyValues) -> Result<Self, ConfigError> {
        let d = Self::default();
        let distance: String = kv.get("late.distance", "3d".to_string())?;
        let confidence: String = kv.get("late.confidence", "mean".to_string())?;
        let cfg = Self {
            refine: RefineParams {
                support_factor: kv.get_f64("refine.support_factor", d.refine.support_factor)?,
                density_scale: kv.get_f64("refine.density_scale", d.refine.density_scale)?,
                mix: kv.get_f64("refine.mix", d.refine.mix)?,
                recenter: kv.get("refine.recenter", d.refine.recenter)?,
                ground_clearance: kv.get_f64("refine.ground_clearance", d.refine.ground_clearance)?,
            },
            nms_iou: kv.get_f64("nms_iou", d.nms_iou)?,
            spc_radius: kv.get_f64("spc.radius", d.spc_radius)?,
            spc_keypoints: kv.get("spc.keypoints", d.spc_keypoints)?,
            scb_keypoints: kv.get("scb.keypoints", d.scb_keypoints)?,
            sectors: kv.get("sectors", d.sectors)?,
            self_radius: kv.get_f64("self_radius", d.self_radius)?,
            late: LateFusionConfig {
                max_dist: kv.get_f64("late.max_dist", d.late.max_dist)?,
                distance: parse_distance(&distance).map_err(|r| ConfigError::bad_value("late.distance", &distance, r))?,
                confidence: parse_confidence(&confidence).map_err(|r| ConfigError::bad_value("late.confidence", &confidence, r))?,
            },
            features: KeypointLayout {
                point_grid_n: kv.get("features.grid_n", d.features.point_grid_n)?,
                point_half_extent: kv.get_f64("features.half_extent", d.features.point_half_extent)?,
                ..d.features
            },
            raw_box: RawBoxLayout {
                grid_n: kv.get("rbf.grid_n", d.raw_box.grid_n)?,
                half_extent: kv.get_f64("rbf.half_extent", d.raw_box.half_extent)?,
            },
            silence_ego: kv.get("silence_ego", d.silence_ego)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::parse(text)?;
        let cfg = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::read(path)?;
        let cfg = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        KvWriter::new()
            .comment("covfuse pipeline")
            .put("refine.support_factor", self.refine.support_factor)
            .put("refine.density_scale", self.refine.density_scale)
            .put("refine.mix", self.refine.mix)
            .put("refine.recenter", self.refine.recenter)
            .put("refine.ground_clearance", self.refine.ground_clearance)
            .put("nms_iou", self.nms_iou)
            .put("spc.radius", self.spc_radius)
            .put("spc.keypoints", self.spc_keypoints)
            .put("scb.keypoints", self.scb_keypoints)
            .put("sectors", self.sectors)
            .put("self_radius", self.self_radius)
            .put("late.max_dist", self.late.max_dist)
            .put("late.distance", if self.late.distance == DistanceMode::Bev { "bev" } else { "3d" })
            .put("late.confidence", if self.late.confidence == FusedConfidence::Max { "max" } else { "mean" })
            .put("features.grid_n", self.features.point_grid_n)
            .put("features.half_extent", self.features.point_half_extent)
            .put("rbf.grid_n", self.raw_box.grid_n)
            .put("rbf.half_extent", self.raw_box.half_extent)
            .put("silence_ego", self.silence_ego)
            .finish()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.refine.validate().map_err(|e| ConfigError::bad_value("refine", "", e.to_string()))?;
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(ConfigError::bad_value("nms_iou", self.nms_iou, "must be in [0, 1]"));
        }
        if !(self.spc_radius > 0.0) {
            return Err(ConfigError::bad_value("spc.radius", self.spc_radius, "must be > 0"));
        }
        if self.sectors == 0 {
            return Err(ConfigError::bad_value("sectors", self.sectors, "must be >= 1"));
        }
        if !(self.self_radius >= 0.0) {
            return Err(ConfigError::bad_value("self_radius", self.self_radius, "must be >= 0"));
        }
        if !(self.late.max_dist >= 0.0) {
            return Err(ConfigError::bad_value("late.max_dist", self.late.max_dist, "must be >= 0"));
        }
        let layout = KeypointLayout { raw_box: Some(self.raw_box), ..self.features };
        layout.validate().map_err(|e| ConfigError::bad_value("features", "", e.to_string()))
    }
}

/// Intermediate products of one frame, for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameArtifacts {
    pub ego_detections: Vec<Detection>,
    /// Received detections in the ego frame, ascending sender id.
    pub collective: Vec<Detection>,
    pub proposals: Vec<Proposal>,
    /// Indices into the ego cloud: SPC keypoints, then the SCB keypoints not
    /// already taken.
    pub keypoints: Vec<usize>,
    /// Empty unless PD, RBF or CVSA is on.
    pub features: Vec<KeypointFeatures>,
    pub detections: Vec<Detection>,
}

/// Boxes whose BEV center lies within `range` of the ego origin.
pub fn within_range(b: &OrientedBox, range: f64) -> bool {
    b.cx.hypot(b.cy) <= range
}

/// Runs one frame.
pub fn fuse_frame(
    frame: &FrameData,
    scenario: &ScenarioConfig,
    method: &MethodSpec,
    cfg: &PipelineConfig,
) -> Result<FrameArtifacts, PipelineError> {
    let cloud = &frame.ego_cloud;
    let ego_detections = if cfg.silence_ego {
        Vec::new()
    } else {
        let mut rng = detector_stream(scenario.seed, frame.index, EGO_ID);
        emulate_detector(cloud.points(), &frame.gt, &scenario.detector, &mut rng)
    };

    let mut coop: BTreeMap<u32, Vec<Detection>> = if method.needs_cpms() {
        collective_by_sender(&frame.cpms, &frame.ego_pose)
    } else {
        BTreeMap::new()
    };
    for dets in coop.values_mut() {
        dets.retain(|d| !within_range(&d.bbox, cfg.self_radius));
    }
    let collective: Vec<Detection> = coop.values().flatten().copied().collect();
    let collective_boxes: Vec<OrientedBox> = collective.iter().map(|d| d.bbox).collect();

    let local: Vec<Proposal> = ego_detections.iter().map(Proposal::local).collect();
    let proposals = if method.cpr.is_some() { inject_proposals(&local, &collective) } else { local.clone() };

    let spc_boxes: Vec<OrientedBox> = match method.cpr {
        Some(Cpr::Spc) => proposals.iter().map(|p| p.bbox).collect(),
        _ => local.iter().map(|p| p.bbox).collect(),
    };
    let mut keypoints = spc_sample(cloud, &spc_boxes, cfg.spc_radius, cfg.spc_keypoints, cfg.sectors)?;
    if method.cvsa {
        let mut taken = vec![false; cloud.len()];
        for &k in &keypoints {
            taken[k] = true;
        }
        let scb = scb_sample(cloud, &collective_boxes, cfg.scb_keypoints, cfg.sectors)?;
        keypoints.extend(scb.into_iter().filter(|&k| !std::mem::replace(&mut taken[k], true)));
    }

    let features = if method.needs_features() {
        let decorated = if method.pd { decorate_points(cloud, &collective) } else { undecorated(cloud) };
        let layout = KeypointLayout { decorated: method.pd, raw_box: method.rbf.then_some(cfg.raw_box), ..cfg.features };
        collect_keypoint_features(&decorated, &keypoints, &collective, &layout)?
    } else {
        Vec::new()
    };

    let support = cloud.select(&keypoints);
    let refined = refine_proposals(&proposals, &support, &cfg.refine)?;
    let mut detections = nms_bev(&refined, cfg.nms_iou);
    if method.late {
        detections = late_fuse_grouped(&detections, &coop, &cfg.late);
    }
    detections.retain(|d| within_range(&d.bbox, scenario.eval_range));
    sort_by_confidence(&mut detections);
    Ok(FrameArtifacts { ego_detections, collective, proposals, keypoints, features, detections })
}

/// Where frames come from: an in-memory dataset or one on disk.
pub trait FrameSource: Sync {
    fn scenario(&self) -> &ScenarioConfig;
    fn frame_count(&self) -> usize;
    /// Frame `index`; CPMs are only loaded when `with_cpms`.
    fn frame(&self, index: usize, with_cpms: bool) -> Result<FrameData, PipelineError>;
    fn ground_truth(&self, index: usize) -> Result<Vec<OrientedBox>, PipelineError>;
}

impl FrameSource for Dataset {
    fn scenario(&self) -> &ScenarioConfig {
        &self.config
    }

    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize, with_cpms: bool) -> Result<FrameData, PipelineError> {
        let f = self.frames.get(index).ok_or(DatasetError::FrameOutOfRange { frame: index, frames: self.frames.len() })?;
        Ok(if with_cpms { f.clone() } else { FrameData { cpms: Vec::new(), ..f.clone() } })
    }

    fn ground_truth(&self, index: usize) -> Result<Vec<OrientedBox>, PipelineError> {
        Ok(self.frames.get(index).ok_or(DatasetError::FrameOutOfRange { frame: index, frames: self.frames.len() })?.gt.clone())
    }
}

impl FrameSource for DatasetDir {
    fn scenario(&self) -> &ScenarioConfig {
        self.config()
    }

    fn frame_count(&self) -> usize {
        DatasetDir::frame_count(self)
    }

    fn frame(&self, index: usize, with_cpms: bool) -> Result<FrameData, PipelineError> {
        Ok(self.load_frame(index, with_cpms)?)
    }

    fn ground_truth(&self, index: usize) -> Result<Vec<OrientedBox>, PipelineError> {
        Ok(DatasetDir::ground_truth(self, index)?)
    }
}

/// Fuses every frame; frames run concurrently, results are in frame order.
pub fn run_method(source: &dyn FrameSource, method: &MethodSpec, cfg: &PipelineConfig) -> Result<Vec<Vec<Detection>>, PipelineError> {
    cfg.validate()?;
    let scenario = *source.scenario();
    let results = par::map_range(source.frame_count(), |i| {
        let frame = source.frame(i, method.needs_cpms())?;
        fuse_frame(&frame, &scenario, method, cfg).map(|a| a.detections)
    });
    results.into_iter().collect()
}

/// Ground truth of every frame, cropped to the evaluation range.
pub fn evaluation_ground_truth(source: &dyn FrameSource) -> Result<Vec<Vec<OrientedBox>>, PipelineError> {
    let range = source.scenario().eval_range;
    (0..source.frame_count())
        .map(|i| Ok(source.ground_truth(i)?.into_iter().filter(|b| within_range(b, range)).collect()))
        .collect()
}

/// Evaluates per-frame detections against the source's ground truth at the
/// default thresholds. Detections outside the evaluation range are ignored.
pub fn evaluate_detections(source: &dyn FrameSource, method: &str, detections: &[Vec<Detection>]) -> Result<EvalReport, PipelineError> {
    let gt = evaluation_ground_truth(source)?;
    let range = source.scenario().eval_range;
    let cropped: Vec<Vec<Detection>> =
        detections.iter().map(|f| f.iter().filter(|d| within_range(&d.bbox, range)).copied().collect()).collect();
    Ok(evaluate(method, &cropped, &gt, &DEFAULT_THRESHOLDS)?)
}

/// Fuse then evaluate.
pub fn run_and_evaluate(source: &dyn FrameSource, method: &MethodSpec, cfg: &PipelineConfig) -> Result<EvalReport, PipelineError> {
    let dets = run_method(source, method, cfg)?;
    evaluate_detections(source, &method.to_string(), &dets)
}
