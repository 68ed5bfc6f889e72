use std::fmt;
use std::str::FromStr;

use crate::config::{ConfigError, KeyValues, KvWriter};

/// Range noise distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangeNoise {
    /// Uniform in `[-range_noise, +range_noise]`.
    #[default]
    Uniform,
    /// Gaussian with σ = `range_noise`.
    Gaussian,
}

impl fmt::Display for RangeNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Gaussian => "gaussian",
        })
    }
}

impl FromStr for RangeNoise {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(format!("expected `uniform` or `gaussian`, got `{other}`")),
        }
    }
}

/// Rotating LiDAR model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    pub channels: usize,
    pub fov_down_deg: f64,
    pub fov_up_deg: f64,
    pub max_range: f64,
    pub range_noise: f64,
    pub noise: RangeNoise,
    pub points_per_frame: usize,
    /// Sensor height above the vehicle's ground contact point.
    pub mount_height: f64,
    /// Whether rays can hit the ground plane z = 0.
    pub ground: bool,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            channels: 64,
            fov_down_deg: -24.9,
            fov_up_deg: 2.0,
            max_range: 120.0,
            range_noise: 0.02,
            noise: RangeNoise::Uniform,
            points_per_frame: 130_000,
            mount_height: 1.73,
            ground: true,
        }
    }
}

impl SensorSpec {
    /// `points_per_frame / channels`, rounded down.
    pub fn azimuth_steps(&self) -> usize {
        self.points_per_frame / self.channels.max(1)
    }

    /// Elevation of channel `c` in radians; channels are evenly spaced over
    /// the vertical field of view, lowest first.
    pub fn elevation(&self, c: usize) -> f64 {
        let span = self.fov_up_deg - self.fov_down_deg;
        let t = if self.channels > 1 { c as f64 / (self.channels - 1) as f64 } else { 0.5 };
        (self.fov_down_deg + t * span).to_radians()
    }

    /// Azimuth of step `k` in radians, starting at −π.
    pub fn azimuth(&self, k: usize) -> f64 {
        -std::f64::consts::PI + std::f64::consts::TAU * k as f64 / self.azimuth_steps() as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.channels == 0 {
            return Err(ConfigError::bad_value("sensor.channels", self.channels, "must be > 0"));
        }
        if self.points_per_frame < self.channels {
            return Err(ConfigError::bad_value("sensor.points_per_frame", self.points_per_frame, "must be >= channels"));
        }
        if !(self.fov_down_deg < self.fov_up_deg && self.fov_down_deg >= -90.0 && self.fov_up_deg <= 90.0) {
            return Err(ConfigError::bad_value(
                "sensor.fov_down_deg",
                self.fov_down_deg,
                format!("vertical field of view must be an increasing range within [-90, 90], up = {}", self.fov_up_deg),
            ));
        }
        if !(self.max_range > 0.0) {
            return Err(ConfigError::bad_value("sensor.max_range", self.max_range, "must be > 0"));
        }
        if !(self.range_noise >= 0.0) {
            return Err(ConfigError::bad_value("sensor.range_noise", self.range_noise, "must be >= 0"));
        }
        if !(self.mount_height > 0.0) {
            return Err(ConfigError::bad_value("sensor.mount_height", self.mount_height, "must be > 0"));
        }
        Ok(())
    }
}

/// Stand-in for a trained detector: which boxes are found and how noisy they
/// are.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorNoiseModel {
    pub center_sigma: f64,
    pub dim_sigma: f64,
    pub yaw_sigma: f64,
    /// m₀: fewest interior points for a detection.
    pub min_points: usize,
    /// n₀ in `1 − exp(−n/n₀)`.
    pub confidence_scale: f64,
    /// λ: mean false positives per frame.
    pub false_positive_rate: f64,
    /// False positives are placed uniformly in a disc of this radius.
    pub false_positive_radius: f64,
    /// Box growth (per side) used when counting interior points, so that hits
    /// pushed outward by range noise still count.
    pub interior_margin: f64,
}

impl Default for DetectorNoiseModel {
    fn default() -> Self {
        Self {
            center_sigma: 0.08,
            dim_sigma: 0.05,
            yaw_sigma: 0.02,
            min_points: 5,
            confidence_scale: 30.0,
            false_positive_rate: 1.0,
            false_positive_radius: 60.0,
            interior_margin: 0.05,
        }
    }
}

impl DetectorNoiseModel {
    /// No noise, no false positives.
    pub fn noiseless() -> Self {
        Self { center_sigma: 0.0, dim_sigma: 0.0, yaw_sigma: 0.0, false_positive_rate: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [
            ("detector.center_sigma", self.center_sigma),
            ("detector.dim_sigma", self.dim_sigma),
            ("detector.yaw_sigma", self.yaw_sigma),
            ("detector.false_positive_rate", self.false_positive_rate),
            ("detector.interior_margin", self.interior_margin),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::bad_value(key, v, "must be >= 0"));
            }
        }
        if !(self.confidence_scale > 0.0) {
            return Err(ConfigError::bad_value("detector.confidence_scale", self.confidence_scale, "must be > 0"));
        }
        if !(self.false_positive_radius > 0.0) {
            return Err(ConfigError::bad_value("detector.false_positive_radius", self.false_positive_radius, "must be > 0"));
        }
        Ok(())
    }
}

/// Most traffic vehicles a scenario may hold.
pub const MAX_TRAFFIC: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub frames: usize,
    pub lanes: usize,
    pub lane_width: f64,
    pub ego_lane: usize,
    pub traffic: usize,
    pub cooperative: usize,
    /// Traffic is placed with |x| ≤ road_length / 2 around the ego.
    pub road_length: f64,
    /// Cooperative vehicles are placed with |x| ≤ coop_spread.
    pub coop_spread: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Seconds between frames.
    pub dt: f64,
    /// Smallest bumper-to-bumper gap between vehicles in one lane.
    pub min_gap: f64,
    /// Ground truth farther than this (BEV, from the ego) is not evaluated.
    pub eval_range: f64,
    pub sensor: SensorSpec,
    pub detector: DetectorNoiseModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            frames: 50,
            lanes: 4,
            lane_width: 3.5,
            ego_lane: 1,
            traffic: 22,
            cooperative: 3,
            road_length: 200.0,
            coop_spread: 50.0,
            speed_min: 22.0,
            speed_max: 30.0,
            dt: 0.1,
            min_gap: 2.0,
            eval_range: 120.0,
            sensor: SensorSpec::default(),
            detector: DetectorNoiseModel::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.traffic > MAX_TRAFFIC {
            return Err(ConfigError::bad_value("traffic", self.traffic, format!("at most {MAX_TRAFFIC}")));
        }
        if self.lanes == 0 {
            return Err(ConfigError::bad_value("lanes", self.lanes, "must be > 0"));
        }
        if self.ego_lane >= self.lanes {
            return Err(ConfigError::bad_value("ego_lane", self.ego_lane, format!("must be < lanes ({})", self.lanes)));
        }
        for (key, v) in [
            ("lane_width", self.lane_width),
            ("road_length", self.road_length),
            ("coop_spread", self.coop_spread),
            ("dt", self.dt),
            ("eval_range", self.eval_range),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::bad_value(key, v, "must be > 0"));
            }
        }
        if !(self.min_gap >= 0.0) {
            return Err(ConfigError::bad_value("min_gap", self.min_gap, "must be >= 0"));
        }
        if !(self.speed_min >= 0.0 && self.speed_min <= self.speed_max) {
            return Err(ConfigError::bad_value("speed_min", self.speed_min, format!("must be in [0, speed_max = {}]", self.speed_max)));
        }
        self.sensor.validate()?;
        self.detector.validate()
    }

    pub fn from_kv(kv: &mut KeyValues) -> Result<Self, ConfigError> {
        let d = Self::default();
        let s = d.sensor;
        let n = d.detector;
        let cfg = Self {
            seed: kv.get("seed", d.seed)?,
            frames: kv.get("frames", d.frames)?,
            lanes: kv.get("lanes", d.lanes)?,
            lane_width: kv.get_f64("lane_width", d.lane_width)?,
            ego_lane: kv.get("ego_lane", d.ego_lane)?,
            traffic: kv.get("traffic", d.traffic)?,
            cooperative: kv.get("cooperative", d.cooperative)?,
            road_length: kv.get_f64("road_length", d.road_length)?,
            coop_spread: kv.get_f64("coop_spread", d.coop_spread)?,
            speed_min: kv.get_f64("speed_min", d.speed_min)?,
            speed_max: kv.get_f64("speed_max", d.speed_max)?,
            dt: kv.get_f64("dt", d.dt)?,
            min_gap: kv.get_f64("min_gap", d.min_gap)?,
            eval_range: kv.get_f64("eval_range", d.eval_range)?,
            sensor: SensorSpec {
                channels: kv.get("sensor.channels", s.channels)?,
                fov_down_deg: kv.get_f64("sensor.fov_down_deg", s.fov_down_deg)?,
                fov_up_deg: kv.get_f64("sensor.fov_up_deg", s.fov_up_deg)?,
                max_range: kv.get_f64("sensor.max_range", s.max_range)?,
                range_noise: kv.get_f64("sensor.range_noise", s.range_noise)?,
                noise: kv.get("sensor.noise", s.noise)?,
                points_per_frame: kv.get("sensor.points_per_frame", s.points_per_frame)?,
                mount_height: kv.get_f64("sensor.mount_height", s.mount_height)?,
                ground: kv.get("sensor.ground", s.ground)?,
            },
            detector: DetectorNoiseModel {
                center_sigma: kv.get_f64("detector.center_sigma", n.center_sigma)?,
                dim_sigma: kv.get_f64("detector.dim_sigma", n.dim_sigma)?,
                yaw_sigma: kv.get_f64("detector.yaw_sigma", n.yaw_sigma)?,
                min_points: kv.get("detector.min_points", n.min_points)?,
                confidence_scale: kv.get_f64("detector.confidence_scale", n.confidence_scale)?,
                false_positive_rate: kv.get_f64("detector.false_positive_rate", n.false_positive_rate)?,
                false_positive_radius: kv.get_f64("detector.false_positive_radius", n.false_positive_radius)?,
                interior_margin: kv.get_f64("detector.interior_margin", n.interior_margin)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses config text; unknown keys are errors.
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

    /// Canonical text with every key; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let s = &self.sensor;
        let n = &self.detector;
        KvWriter::new()
            .comment("covfuse scenario")
            .put("seed", self.seed)
            .put("frames", self.frames)
            .put("lanes", self.lanes)
            .put("lane_width", self.lane_width)
            .put("ego_lane", self.ego_lane)
            .put("traffic", self.traffic)
            .put("cooperative", self.cooperative)
            .put("road_length", self.road_length)
            .put("coop_spread", self.coop_spread)
            .put("speed_min", self.speed_min)
            .put("speed_max", self.speed_max)
            .put("dt", self.dt)
            .put("min_gap", self.min_gap)
            .put("eval_range", self.eval_range)
            .put("sensor.channels", s.channels)
            .put("sensor.fov_down_deg", s.fov_down_deg)
            .put("sensor.fov_up_deg", s.fov_up_deg)
            .put("sensor.max_range", s.max_range)
            .put("sensor.range_noise", s.range_noise)
            .put("sensor.noise", s.noise)
            .put("sensor.points_per_frame", s.points_per_frame)
            .put("sensor.mount_height", s.mount_height)
            .put("sensor.ground", s.ground)
            .put("detector.center_sigma", n.center_sigma)
            .put("detector.dim_sigma", n.dim_sigma)
            .put("detector.yaw_sigma", n.yaw_sigma)
            .put("detector.min_points", n.min_points)
            .put("detector.confidence_scale", n.confidence_scale)
            .put("detector.false_positive_rate", n.false_positive_rate)
            .put("detector.false_positive_radius", n.false_positive_radius)
            .put("detector.interior_margin", n.interior_margin)
            .finish()
    }
}
