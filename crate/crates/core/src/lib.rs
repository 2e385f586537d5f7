//! Discrete-event simulator for periodic safety-message broadcast in V2V
//! networks.
//!
//! The crate compares three broadcast-interval policies (fixed 10 Hz, an
//! age-of-information minimizing baseline, and a trackability-aware variant
//! driven by each vehicle's self tracking error) on a shared CSMA channel
//! with log-distance path loss and Nakagami fading.
//!
//! Module map:
//!
//! - [`mobility`]: Krauss car following with lane changes on a closed
//!   rectangular circuit, plus trace ingestion.
//! - [`channel`]: propagation, fading, airtime and CSMA access.
//! - [`metrics`]: position extrapolation, tracking error, time-to-collision
//!   error, collision-risk counting and packet delivery ratio.
//! - [`aoi`]: age and trackability-aware age accounting.
//! - [`rate_control`]: the three interval policies.
//! - [`engine`]: the event loop tying everything together.
//! - [`oracle`]: exact slotted replay and exhaustive schedule search.

pub mod aoi;
pub mod channel;
pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod oracle;
pub mod rate_control;
pub mod rng;

/// Dense vehicle identifier. Builtin mobility numbers vehicles `0..N`.
pub type VehicleId = u32;

pub use engine::{run_simulation, run_with_table, RunReport, SimConfig};
