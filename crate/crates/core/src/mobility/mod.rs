//! Ground-truth vehicle trajectories.
//!
//! Trajectories come either from the builtin Krauss car-following model on a
//! closed rectangular circuit ([`krauss`]) or from a CSV trace ([`trace`]).
//! Both end up as a [`TrajectoryTable`] sampled at a fixed tick, which the
//! engine queries through [`TrajectoryTable::position_at`].

mod krauss;
mod road;
mod trace;

pub use krauss::{
    initial_placement, krauss_step, lane_change, min_same_lane_gap, safe_speed, simulate_krauss,
    KraussParams,
};
pub use road::RoadConfig;
pub use trace::{load_trace, write_trace, TrajectoryTable};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::VehicleId;

/// Default mobility tick in seconds.
pub const MOBILITY_TICK: f64 = 0.1;

/// Kinematics of one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub x: f64,
    pub y: f64,
    /// m/s
    pub speed: f64,
    /// Radians, 0 along +x, counter-clockwise.
    pub heading: f64,
    pub lane: u32,
    pub t: f64,
}

impl VehicleState {
    pub fn velocity(&self) -> (f64, f64) {
        (self.speed * self.heading.cos(), self.speed * self.heading.sin())
    }

    pub fn distance_to(&self, other: &VehicleState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Error)]
pub enum MobilityError {
    #[error("vehicles {a} and {b} occupy the same position in lane {lane}")]
    Collision { a: VehicleId, b: VehicleId, lane: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("trace line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("trace format: {0}")]
    Format(String),
    #[error("vehicle {id} has no sample at t={t} (span {start}..={end})")]
    OutOfRange { id: VehicleId, t: f64, start: f64, end: f64 },
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
