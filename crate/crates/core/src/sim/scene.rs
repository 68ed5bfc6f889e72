use rand::Rng;

use super::config::ScenarioConfig;
use super::SimError;
use crate::geometry::{OrientedBox, Pose};
use crate::rng::{stream, Purpose};

/// Placement attempts per vehicle before the layout is declared infeasible.
const MAX_ATTEMPTS: usize = 1000;

/// Passenger-car envelope (length, width, height ranges in meters).
pub const CAR_LENGTH: (f64, f64) = (4.2, 5.0);
pub const CAR_WIDTH: (f64, f64) = (1.7, 2.0);
pub const CAR_HEIGHT: (f64, f64) = (1.4, 1.8);

/// Id of the ego vehicle; cooperative vehicles are 1..=n, traffic starts here.
pub const EGO_ID: u32 = 0;
pub const FIRST_TRAFFIC_ID: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Ego,
    Cooperative,
    Traffic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle {
    pub id: u32,
    pub role: Role,
    pub lane: usize,
    /// World-frame box; its floor touches the ground (cz = h/2).
    pub bbox: OrientedBox,
    /// Along +x, m/s.
    pub speed: f64,
}

impl Vehicle {
    /// Vehicle frame: origin on the ground below the box center, x forward.
    pub fn pose(&self) -> Pose {
        Pose::new(self.bbox.cx, self.bbox.cy, 0.0, self.bbox.yaw)
    }
}

/// Every vehicle at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub frame: usize,
    pub time: f64,
    pub vehicles: Vec<Vehicle>,
}

impl World {
    pub fn ego(&self) -> &Vehicle {
        self.vehicle(EGO_ID).expect("every world has an ego vehicle")
    }

    pub fn vehicle(&self, id: u32) -> Option<&Vehicle> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn cooperative(&self) -> impl Iterator<Item = &Vehicle> {
        self.vehicles.iter().filter(|v| v.role == Role::Cooperative)
    }

    pub fn boxes(&self) -> Vec<OrientedBox> {
        self.vehicles.iter().map(|v| v.bbox).collect()
    }
}

pub fn lane_center(cfg: &ScenarioConfig, lane: usize) -> f64 {
    (lane as f64 - (cfg.lanes as f64 - 1.0) / 2.0) * cfg.lane_width
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

/// Frame-0 layout. Same-lane vehicles share the lane speed, so the layout
/// stays overlap-free as it advances.
pub fn initial_layout(cfg: &ScenarioConfig) -> Result<Vec<Vehicle>, SimError> {
    cfg.validate()?;
    let speeds: Vec<f64> = (0..cfg.lanes)
        .map(|lane| {
            let mut rng = stream(cfg.seed, 0, 0, Purpose::LaneSpeed, lane as u64);
            uniform(&mut rng, (cfg.speed_min, cfg.speed_max))
        })
        .collect();
    let mut rng = stream(cfg.seed, 0, 0, Purpose::Placement, 0);
    let mut placed: Vec<Vehicle> = Vec::with_capacity(1 + cfg.cooperative + cfg.traffic);

    let mut requests: Vec<(u32, Role)> = vec![(EGO_ID, Role::Ego)];
    requests.extend((1..=cfg.cooperative as u32).map(|id| (id, Role::Cooperative)));
    requests.extend((0..cfg.traffic as u32).map(|i| (FIRST_TRAFFIC_ID + i, Role::Traffic)));

    for (id, role) in requests {
        let mut attempt = 0;
        let vehicle = loop {
            if attempt == MAX_ATTEMPTS {
                return Err(SimError::Infeasible { vehicle: id, placed: placed.len(), attempts: MAX_ATTEMPTS });
            }
            attempt += 1;
            let (l, w, h) = (uniform(&mut rng, CAR_LENGTH), uniform(&mut rng, CAR_WIDTH), uniform(&mut rng, CAR_HEIGHT));
            let (lane, x) = match role {
                Role::Ego => (cfg.ego_lane, 0.0),
                Role::Cooperative => (rng.random_range(0..cfg.lanes), uniform(&mut rng, (-cfg.coop_spread, cfg.coop_spread))),
                Role::Traffic => {
                    let half = cfg.road_length / 2.0;
                    (rng.random_range(0..cfg.lanes), uniform(&mut rng, (-half, half)))
                }
            };
            let clear = placed
                .iter()
                .filter(|o| o.lane == lane)
                .all(|o| (o.bbox.cx - x).abs() >= (o.bbox.l + l) / 2.0 + cfg.min_gap);
            if clear {
                let bbox = OrientedBox::new(x, lane_center(cfg, lane), h / 2.0, l, w, h, 0.0)?;
                break Vehicle { id, role, lane, bbox, speed: speeds[lane] };
            }
        };
        placed.push(vehicle);
    }
    Ok(placed)
}

/// The layout advanced to `frame`.
pub fn advance(layout: &[Vehicle], frame: usize, dt: f64) -> World {
    let time = frame as f64 * dt;
    let vehicles = layout
        .iter()
        .map(|v| Vehicle { bbox: OrientedBox { cx: v.bbox.cx + v.speed * time, ..v.bbox }, ..*v })
        .collect();
    World { frame, time, vehicles }
}

/// World state at `frame`; a pure function of `(cfg, frame)`.
pub fn generate_scene(cfg: &ScenarioConfig, frame: usize) -> Result<World, SimError> {
    if frame >= cfg.frames {
        return Err(SimError::FrameOutOfRange { frame, frames: cfg.frames });
    }
    Ok(advance(&initial_layout(cfg)?, frame, cfg.dt))
}
