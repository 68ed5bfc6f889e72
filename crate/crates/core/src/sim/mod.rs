//! Synthetic highway scenarios: lane-keeping traffic, a ray-cast LiDAR with
//! occlusion, and a noise-model detector emulator for every vehicle.

mod config;
mod detector;
mod lidar;
mod scene;

pub use config::{DetectorNoiseModel, RangeNoise, ScenarioConfig, SensorSpec, MAX_TRAFFIC};
pub use detector::{confidence_for, emulate_detector, interior_counts};
pub use lidar::{distance_to_surface, ray_box_entry, raycast_lidar, sweep, Hit, SweepKey, GROUND_INTENSITY, VEHICLE_INTENSITY};
pub use scene::{
    advance, generate_scene, initial_layout, lane_center, Role, Vehicle, World, CAR_HEIGHT, CAR_LENGTH, CAR_WIDTH, EGO_ID,
    FIRST_TRAFFIC_ID,
};

use crate::config::ConfigError;
use crate::cpm::{CpmMessage, Detection};
use crate::geometry::{GeometryError, OrientedBox, Pose};
use crate::par;
use crate::rng::{stream, Purpose};
use crate::sampling::PointCloud;
use rand::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("cannot place vehicle {vehicle} without overlap after {attempts} attempts ({placed} placed)")]
    Infeasible { vehicle: u32, placed: usize, attempts: usize },
    #[error("frame {frame} out of range ({frames} frames)")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Everything the ego vehicle has at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub index: usize,
    pub ego_pose: Pose,
    /// Ego LiDAR sweep, ego vehicle frame.
    pub ego_cloud: PointCloud,
    /// Every other vehicle's box, ego vehicle frame.
    pub gt: Vec<OrientedBox>,
    /// One message per cooperative vehicle, ascending sender id.
    pub cpms: Vec<CpmMessage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub frames: Vec<FrameData>,
}

/// Random stream of the emulated detector on `vehicle` at `frame`.
pub fn detector_stream(seed: u64, frame: usize, vehicle: u32) -> rand_chacha::ChaCha8Rng {
    stream(seed, frame as u64, u64::from(vehicle), Purpose::Detector, 0)
}

fn others(world: &World, id: u32) -> Vec<OrientedBox> {
    world.vehicles.iter().filter(|v| v.id != id).map(|v| v.bbox).collect()
}

/// Sweep and detector output of one vehicle, in its own frame.
pub fn vehicle_view(cfg: &ScenarioConfig, world: &World, id: u32) -> (PointCloud, Vec<OrientedBox>, Vec<Detection>) {
    let vehicle = world.vehicle(id).expect("vehicle exists");
    let pose = vehicle.pose();
    let boxes = others(world, id);
    let key = SweepKey { seed: cfg.seed, frame: world.frame as u64, vehicle: u64::from(id) };
    let cloud = raycast_lidar(&boxes, &pose, &cfg.sensor, key);
    let to_local = pose.inverse();
    let local: Vec<OrientedBox> = boxes.iter().map(|b| b.transformed(&to_local)).collect();
    let dets = emulate_detector(cloud.points(), &local, &cfg.detector, &mut detector_stream(cfg.seed, world.frame, id));
    (cloud, local, dets)
}

/// One frame from an already generated layout.
pub fn simulate_frame(cfg: &ScenarioConfig, layout: &[Vehicle], frame: usize) -> FrameData {
    let world = advance(layout, frame, cfg.dt);
    let ego = world.ego();
    let ego_pose = ego.pose();
    let key = SweepKey { seed: cfg.seed, frame: frame as u64, vehicle: u64::from(EGO_ID) };
    let boxes = others(&world, EGO_ID);
    let ego_cloud = raycast_lidar(&boxes, &ego_pose, &cfg.sensor, key);
    let to_ego = ego_pose.inverse();
    let gt = boxes.iter().map(|b| b.transformed(&to_ego)).collect();
    let mut coop: Vec<&Vehicle> = world.cooperative().collect();
    coop.sort_by_key(|v| v.id);
    let cpms = coop
        .iter()
        .map(|v| {
            let (_, _, detections) = vehicle_view(cfg, &world, v.id);
            CpmMessage {
                sender_id: v.id,
                frame_index: frame as u64,
                timestamp: world.time,
                sender_pose: v.pose(),
                detections,
            }
        })
        .collect();
    FrameData { index: frame, ego_pose, ego_cloud, gt, cpms }
}

/// Simulates every frame. Frames run concurrently; the result does not
/// depend on the worker count.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Dataset, SimError> {
    let layout = initial_layout(cfg)?;
    let frames = par::map_range(cfg.frames, |f| simulate_frame(cfg, &layout, f));
    Ok(Dataset { config: *cfg, frames })
}

/// Adds `count` spurious detections per frame to `sender`'s CPM.
///
/// They lie on the road within `range` of the ego vehicle and at least
/// `clearance` (BEV, center to center) from every vehicle, ego included.
/// Boxes are written in the sender's frame, like real CPM content.
pub fn inject_spurious(ds: &mut Dataset, sender: u32, count: usize, confidence: f64, range: f64, clearance: f64) {
    let cfg = ds.config;
    let road = (lane_center(&cfg, 0) - cfg.lane_width / 2.0, lane_center(&cfg, cfg.lanes - 1) + cfg.lane_width / 2.0);
    for f in &mut ds.frames {
        let Some(msg) = f.cpms.iter_mut().find(|m| m.sender_id == sender) else { continue };
        let mut rng = stream(cfg.seed, f.index as u64, u64::from(sender), Purpose::Spurious, 0);
        let ego_y = f.ego_pose.translation().y;
        let to_sender = msg.sender_pose.inverse().compose(&f.ego_pose);
        let mut placed: Vec<(f64, f64)> = f.gt.iter().map(|b| (b.cx, b.cy)).collect();
        placed.push((0.0, 0.0));
        let mut added = 0;
        for _ in 0..count * 1000 {
            if added == count {
                break;
            }
            let x = rng.random_range(-range..=range);
            let y = rng.random_range(road.0..=road.1) - ego_y;
            if x.hypot(y) > range || placed.iter().any(|&(px, py)| (x - px).hypot(y - py) < clearance) {
                continue;
            }
            let l = rng.random_range(CAR_LENGTH.0..=CAR_LENGTH.1);
            let w = rng.random_range(CAR_WIDTH.0..=CAR_WIDTH.1);
            let h = rng.random_range(CAR_HEIGHT.0..=CAR_HEIGHT.1);
            let bbox = OrientedBox { cx: x, cy: y, cz: h / 2.0, l, w, h, yaw: 0.0 }.transformed(&to_sender);
            msg.detections.push(Detection { bbox, class_id: 0, confidence });
            placed.push((x, y));
            added += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpm::to_ego_frame;

    fn small() -> ScenarioConfig {
        let mut cfg = ScenarioConfig { frames: 2, traffic: 8, ..Default::default() };
        cfg.sensor.points_per_frame = 64 * 600;
        cfg
    }

    #[test]
    fn no_cooperative_vehicles() {
        let cfg = ScenarioConfig { cooperative: 0, ..small() };
        let ds = run_scenario(&cfg).unwrap();
        assert!(ds.frames.iter().all(|f| f.cpms.is_empty()));
    }

    #[test]
    fn deterministic_across_workers() {
        let cfg = small();
        let a = par::with_workers(1, || run_scenario(&cfg).unwrap());
        let b = par::with_workers(3, || run_scenario(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn cpm_detections_within_sender_range() {
        let cfg = small();
        let ds = run_scenario(&cfg).unwrap();
        for f in &ds.frames {
            assert_eq!(f.cpms.iter().map(|m| m.sender_id).collect::<Vec<_>>(), vec![1, 2, 3]);
            for m in &f.cpms {
                let sender = f.ego_pose.inverse().compose(&m.sender_pose).translation();
                for d in to_ego_frame(m, &f.ego_pose) {
                    // Box centers sit within half a diagonal of some hit, plus noise.
                    assert!(d.bbox.center().bev_distance(&sender) <= cfg.sensor.max_range + 5.0);
                }
            }
        }
    }

    #[test]
    fn gt_excludes_ego() {
        let ds = run_scenario(&small()).unwrap();
        let f = &ds.frames[0];
        assert_eq!(f.gt.len(), small().traffic + small().cooperative);
        assert!(f.gt.iter().all(|b| b.cx.hypot(b.cy) > 1.0));
    }

    #[test]
    fn spurious_detections_in_empty_space() {
        let cfg = small();
        let clean = run_scenario(&cfg).unwrap();
        let mut ds = clean.clone();
        inject_spurious(&mut ds, 1, 20, 0.9, 60.0, 5.0);
        for (a, b) in clean.frames.iter().zip(&ds.frames) {
            assert_eq!(a.cpms[1..], b.cpms[1..]);
            let before = a.cpms[0].detections.len();
            let msg = &b.cpms[0];
            assert_eq!(msg.detections[..before], a.cpms[0].detections[..]);
            assert_eq!(msg.detections.len(), before + 20);
            let ego_view = to_ego_frame(msg, &b.ego_pose);
            for d in &ego_view[before..] {
                assert!(d.bbox.cx.hypot(d.bbox.cy) <= 60.0 + 1e-9);
                assert!(d.bbox.cx.hypot(d.bbox.cy) >= 5.0 - 1e-9);
                assert!(b.gt.iter().all(|g| g.center().bev_distance(&d.bbox.center()) >= 5.0 - 1e-9));
                assert_eq!(d.confidence, 0.9);
            }
        }
    }
}
