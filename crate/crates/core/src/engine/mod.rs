//! Simulation driver.
//!
//! Ground truth is precomputed into a [`TrajectoryTable`], so mobility never
//! depends on the protocol under test. The realistic channel runs as a
//! discrete-event loop (`des`); the idealized slotted channel is a plain
//! per-slot loop (`slotted`). Both share the per-vehicle bookkeeping in
//! [`World`].

mod des;
mod slotted;

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

use crate::aoi::{NeighborRecord, TaoiGate};
use crate::channel::ChannelConfig;
use crate::metrics::{
    collision_risk_indicator, delta_ttc, estimate_position, relative_speed, self_tracking_error,
    tracking_error, ttc_threshold, PdrCounters, SafetyParams,
};
use crate::mobility::{
    load_trace, simulate_krauss, KraussParams, MobilityError, RoadConfig, TrajectoryTable,
    VehicleState, MOBILITY_TICK,
};
use crate::rate_control::{
    aoi_rate_update, assess_self_risk, fixed_rate, taoi_rate_update, ControllerConfig,
    ControllerState, Protocol,
};
use crate::rng::{stream, Stream};
use crate::VehicleId;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    #[default]
    Realistic,
    IdealizedSlotted,
}

/// What happens to a queued, not yet transmitted BSM when a new one is
/// generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueuePolicy {
    #[default]
    Replace,
    Fcfs,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MobilitySource {
    #[default]
    Builtin,
    Trace(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub vehicle_count: usize,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    pub protocol: Protocol,
    pub channel_mode: ChannelMode,
    pub road: RoadConfig,
    pub channel: ChannelConfig,
    pub krauss: KraussParams,
    pub safety: SafetyParams,
    pub controller: ControllerConfig,
    pub mobility_source: MobilitySource,
    pub mobility_tick: f64,
    pub taoi_gate: TaoiGate,
    pub queue: QueuePolicy,
    /// Seconds without a reception after which a neighbor is dropped.
    pub neighbor_timeout: f64,
    pub pdr_bin_width: f64,
    pub interval_bin_ms: f64,
    /// Upper bound of a uniform delay added to every BSM generation on top
    /// of the vehicle's nominal clock, seconds.
    pub generation_jitter: f64,
    /// Slotted mode only: transmitters of each slot, replacing contention.
    pub forced_schedule: Option<Vec<Vec<VehicleId>>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            vehicle_count: 150,
            duration: 100.0,
            seed: 0,
            protocol: Protocol::Fixed10Hz,
            channel_mode: ChannelMode::Realistic,
            road: RoadConfig::default(),
            channel: ChannelConfig::default(),
            krauss: KraussParams::default(),
            safety: SafetyParams::default(),
            controller: ControllerConfig::default(),
            mobility_source: MobilitySource::Builtin,
            mobility_tick: MOBILITY_TICK,
            taoi_gate: TaoiGate::Sender,
            queue: QueuePolicy::Replace,
            neighbor_timeout: 5.0,
            pdr_bin_width: 25.0,
            interval_bin_ms: 10.0,
            generation_jitter: 0.0,
            forced_schedule: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if self.vehicle_count < 2 {
            return bad(format!("vehicle_count must be >= 2, got {}", self.vehicle_count));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return bad(format!("duration must be finite and >= 0, got {}", self.duration));
        }
        if !(self.mobility_tick > 0.0) {
            return bad("mobility_tick must be positive".into());
        }
        if !(self.neighbor_timeout > 0.0) || !(self.pdr_bin_width > 0.0) || !(self.interval_bin_ms > 0.0) {
            return bad("neighbor_timeout, pdr_bin_width and interval_bin_ms must be positive".into());
        }
        if !(self.generation_jitter >= 0.0) || self.generation_jitter >= self.controller.delta_min {
            return bad("generation_jitter must lie in [0, controller.delta_min)".into());
        }
        self.road.validate()?;
        self.krauss.validate()?;
        self.channel.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.safety.validate().map_err(EngineError::Config)?;
        self.controller.validate().map_err(|e| EngineError::Config(e.0))?;
        if let Some(schedule) = &self.forced_schedule {
            if self.channel_mode != ChannelMode::IdealizedSlotted {
                return bad("forced_schedule requires channel_mode idealized_slotted".into());
            }
            for (k, slot) in schedule.iter().enumerate() {
                if slot.len() > self.channel.slotted_capacity {
                    return bad(format!("forced_schedule slot {k} exceeds the slot capacity"));
                }
                if let Some(id) = slot.iter().find(|&&id| id as usize >= self.vehicle_count) {
                    return bad(format!("forced_schedule slot {k} names unknown vehicle {id}"));
                }
            }
        }
        Ok(())
    }
}

/// One measurement-interval decision of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiRow {
    pub t: f64,
    pub vehicle_id: VehicleId,
    pub delta_ms: f64,
    pub flag: u8,
    pub aoi_v: Option<f64>,
    pub taoi_v: Option<f64>,
}

/// Mean tracking error one receiver had about one sender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTe {
    pub sender: VehicleId,
    pub receiver: VehicleId,
    pub mean_te: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSummary {
    pub id: VehicleId,
    pub max_self_te: f64,
    pub mean_interval_ms: f64,
    pub epochs: u64,
    pub risky_epochs: u64,
    pub congested_epochs: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameCounters {
    pub generated: u64,
    pub transmitted: u64,
    pub replaced: u64,
    pub queued_at_end: u64,
    pub on_air_at_end: u64,
    pub link_deliveries: u64,
}

impl FrameCounters {
    /// Every generated frame was sent, superseded, or is still pending.
    pub fn conserved(&self) -> bool {
        self.generated == self.transmitted + self.replaced + self.queued_at_end + self.on_air_at_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdrBin {
    pub lo_m: f64,
    pub hi_m: f64,
    pub successes: u64,
    pub opportunities: u64,
    pub pdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBin {
    pub lo_ms: f64,
    pub hi_ms: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub protocol: Protocol,
    pub n_vehicles: usize,
    pub seed: u64,
    pub duration: f64,
    pub system_aoi: f64,
    pub system_taoi: f64,
    pub collision_risk_count: u64,
    pub pdr_bins: Vec<PdrBin>,
    pub overall_pdr: Option<f64>,
    pub interval_histogram: Vec<IntervalBin>,
    pub mean_interval_ms: f64,
    pub timeseries: Vec<MiRow>,
    pub pair_tracking_error: Vec<PairTe>,
    pub vehicles: Vec<VehicleSummary>,
    pub frames: FrameCounters,
    pub config: SimConfig,
}

impl RunReport {
    fn empty(config: &SimConfig) -> Self {
        Self {
            protocol: config.protocol,
            n_vehicles: config.vehicle_count,
            seed: config.seed,
            duration: config.duration,
            system_aoi: 0.0,
            system_taoi: 0.0,
            collision_risk_count: 0,
            pdr_bins: Vec::new(),
            overall_pdr: None,
            interval_histogram: Vec::new(),
            mean_interval_ms: 0.0,
            timeseries: Vec::new(),
            pair_tracking_error: Vec::new(),
            vehicles: Vec::new(),
            frames: FrameCounters::default(),
            config: config.clone(),
        }
    }

    pub fn pair_te(&self, sender: VehicleId, receiver: VehicleId) -> Option<&PairTe> {
        self.pair_tracking_error
            .iter()
            .find(|p| p.sender == sender && p.receiver == receiver)
    }
}

/// Ground truth for a config: the builtin Krauss run (its own random stream)
/// or the configured trace.
pub fn build_trajectories(config: &SimConfig) -> Result<TrajectoryTable, EngineError> {
    match &config.mobility_source {
        MobilitySource::Builtin => {
            let mut rng = stream(config.seed, Stream::Mobility);
            Ok(simulate_krauss(
                config.vehicle_count,
                &config.road,
                &config.krauss,
                config.duration,
                config.mobility_tick,
                &mut rng,
            )?)
        }
        MobilitySource::Trace(path) => Ok(load_trace(path)?),
    }
}

pub fn run_simulation(config: &SimConfig) -> Result<RunReport, EngineError> {
    config.validate()?;
    if config.duration == 0.0 {
        return Ok(RunReport::empty(config));
    }
    let table = build_trajectories(config)?;
    run_with_table(config, &table)
}

/// Runs against an explicit trajectory table. Vehicle ids must be
/// `0..vehicle_count` and every track must cover `[0, duration]`.
pub fn run_with_table(config: &SimConfig, table: &TrajectoryTable) -> Result<RunReport, EngineError> {
    config.validate()?;
    if config.duration == 0.0 {
        return Ok(RunReport::empty(config));
    }
    let ids = table.vehicle_ids();
    if ids.len() != config.vehicle_count {
        return Err(EngineError::Config(format!(
            "trajectory has {} vehicles, config expects {}",
            ids.len(),
            config.vehicle_count
        )));
    }
    if ids.iter().enumerate().any(|(i, &id)| id as usize != i) {
        return Err(EngineError::Config("trajectory vehicle ids must be 0..N".into()));
    }
    for i in 0..ids.len() {
        let (start, end) = table.span_idx(i);
        if start.abs() > 1e-9 || end < config.duration - 1e-9 {
            return Err(EngineError::Config(format!(
                "vehicle {i} trajectory spans {start}..{end}, run needs 0..{}",
                config.duration
            )));
        }
    }
    let mut world = World::new(config, table);
    match config.channel_mode {
        ChannelMode::Realistic => des::run(&mut world)?,
        ChannelMode::IdealizedSlotted => slotted::run(&mut world)?,
    }
    Ok(world.finish())
}

struct Node {
    ctrl: ControllerState,
    /// Records indexed by sender.
    records: Vec<NeighborRecord>,
    self_te_max: f64,
    delta_sum_ms: f64,
    epochs: u64,
    risky_epochs: u64,
    congested_epochs: u64,
}

#[derive(Default, Clone, Copy)]
struct TeAcc {
    sum: f64,
    n: u64,
}

struct World<'a> {
    cfg: &'a SimConfig,
    table: &'a TrajectoryTable,
    n: usize,
    /// Slotted runs account age per slot and never integrate.
    slotted: bool,
    /// End of the accounted time span.
    horizon: f64,
    nodes: Vec<Node>,
    range: f64,
    pair_te: Vec<TeAcc>,
    risk_count: u64,
    pdr: PdrCounters,
    frames: FrameCounters,
    timeseries: Vec<MiRow>,
}

impl<'a> World<'a> {
    fn new(cfg: &'a SimConfig, table: &'a TrajectoryTable) -> Self {
        let n = cfg.vehicle_count;
        let nodes = (0..n)
            .map(|_| Node {
                ctrl: ControllerState::new(cfg.controller.clone(), cfg.safety.te_threshold),
                records: (0..n as VehicleId).map(NeighborRecord::new).collect(),
                self_te_max: 0.0,
                delta_sum_ms: 0.0,
                epochs: 0,
                risky_epochs: 0,
                congested_epochs: 0,
            })
            .collect();
        Self {
            cfg,
            table,
            n,
            slotted: cfg.channel_mode == ChannelMode::IdealizedSlotted,
            horizon: cfg.duration,
            nodes,
            range: cfg.channel.nominal_range(),
            pair_te: vec![TeAcc::default(); n * n],
            risk_count: 0,
            pdr: PdrCounters::new(cfg.pdr_bin_width),
            frames: FrameCounters::default(),
            timeseries: Vec::new(),
        }
    }

    fn truth(&self, v: usize, t: f64) -> Result<VehicleState, EngineError> {
        Ok(self.table.state_at_idx(v, t)?)
    }

    fn truth_all(&self, t: f64) -> Result<Vec<VehicleState>, EngineError> {
        (0..self.n).map(|v| self.truth(v, t)).collect()
    }

    /// Drops a neighbor that has been silent past the timeout, closing its
    /// age curve at the eviction instant.
    fn evict_stale(&mut self, v: usize, u: usize, t: f64) {
        let timeout = self.cfg.neighbor_timeout;
        let rec = &mut self.nodes[v].records[u];
        if rec.last_bsm.is_some() && t > rec.last_seen + timeout {
            if !self.slotted {
                let _ = rec.advance(rec.last_seen + timeout);
            }
            rec.last_bsm = None;
        }
    }

    /// Tracking error and collision-risk sampling for every ordered pair
    /// with a held message and the two vehicles in range.
    fn sample_tracking(&mut self, t: f64, states: &[VehicleState]) -> Result<(), EngineError> {
        let safety = &self.cfg.safety;
        for v in 0..self.n {
            let sv = &states[v];
            let threshold = ttc_threshold(sv.speed, safety);
            for u in 0..self.n {
                if u == v {
                    continue;
                }
                let rec = &self.nodes[v].records[u];
                let Some(bsm) = &rec.last_bsm else { continue };
                if t > rec.last_seen + self.cfg.neighbor_timeout {
                    continue;
                }
                let su = &states[u];
                if sv.distance_to(su) > self.range {
                    continue;
                }
                let est = estimate_position(bsm, t)
                    .map_err(|e| EngineError::Config(format!("clock inconsistency: {e}")))?;
                let te = tracking_error(su, est);
                let acc = &mut self.pair_te[u * self.n + v];
                acc.sum += te;
                acc.n += 1;
                let d = delta_ttc(te, relative_speed(su, sv), safety);
                if collision_risk_indicator(d, threshold) {
                    self.risk_count += 1;
                }
            }
        }
        Ok(())
    }

    /// End of a measurement interval at vehicle `v`: self-risk assessment,
    /// windowed neighborhood ages, then the configured rate update.
    fn measurement(&mut self, v: usize, t: f64) -> Result<(), EngineError> {
        let t_mi = self.cfg.controller.t_mi;
        let now = self.truth(v, t)?;
        let prev = self.truth(v, (t - t_mi).max(0.0))?;
        let self_te = self_tracking_error(&now, &prev, t_mi)
            .map_err(|e| EngineError::Config(e.to_string()))?;

        let mut aoi = Vec::new();
        let mut taoi = Vec::new();
        let mut intervals = Vec::new();
        for u in 0..self.n {
            if u == v {
                continue;
            }
            self.evict_stale(v, u, t);
            let rec = &mut self.nodes[v].records[u];
            if rec.last_bsm.is_some() && !self.slotted {
                let _ = rec.advance(t);
            }
            let (a, g, covered) = rec.take_window();
            let Some(bsm) = rec.last_bsm else { continue };
            if covered <= 0.0 {
                continue;
            }
            // Neighbors are senders believed to be within transmission range.
            let (ex, ey) = estimate_position(&bsm, t).unwrap_or((bsm.x, bsm.y));
            if (ex - now.x).hypot(ey - now.y) > self.range {
                continue;
            }
            aoi.push(a / covered);
            intervals.push(rec.neighbor_interval);
            if rec.neighbor_risky {
                taoi.push(g / covered);
            }
        }
        let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        let aoi_v = mean(&aoi);
        let taoi_v = mean(&taoi);
        let delta_avg = mean(&intervals);

        let node = &mut self.nodes[v];
        let flag = assess_self_risk(self_te, &mut node.ctrl);
        if self.cfg.taoi_gate == TaoiGate::Receiver {
            for rec in node.records.iter_mut() {
                let _ = rec.set_gate(t, flag);
            }
        }
        let congested = matches!((aoi_v, delta_avg), (Some(a), Some(d)) if a > 2.0 * d);
        let (delta, _) = match self.cfg.protocol {
            Protocol::Fixed10Hz => fixed_rate(&mut node.ctrl),
            Protocol::Aoi => aoi_rate_update(&mut node.ctrl, aoi_v, delta_avg),
            Protocol::Taoi => taoi_rate_update(&mut node.ctrl, taoi_v, aoi_v, delta_avg, taoi.len()),
        };
        node.self_te_max = node.self_te_max.max(self_te);
        node.delta_sum_ms += delta * 1e3;
        node.epochs += 1;
        node.risky_epochs += flag as u64;
        node.congested_epochs += congested as u64;
        self.timeseries.push(MiRow {
            t,
            vehicle_id: v as VehicleId,
            delta_ms: delta * 1e3,
            flag: flag as u8,
            aoi_v,
            taoi_v,
        });
        Ok(())
    }

    fn finish(mut self) -> RunReport {
        let end = self.horizon;
        let n = self.n;
        let mut aoi_area = 0.0;
        let mut taoi_area = 0.0;
        for v in 0..n {
            for u in 0..n {
                if u == v {
                    continue;
                }
                self.evict_stale(v, u, end);
                let rec = &mut self.nodes[v].records[u];
                if rec.last_bsm.is_some() && rec.accounted_until < end && !self.slotted {
                    let _ = rec.advance(end);
                }
                aoi_area += rec.run_aoi_area;
                taoi_area += rec.run_taoi_area;
            }
        }
        let norm = if end > 0.0 { end * (n * (n - 1)) as f64 } else { 1.0 };

        let pdr_bins = self
            .pdr
            .bins
            .iter()
            .enumerate()
            .filter(|(_, b)| b.1 > 0)
            .map(|(i, &(s, o))| PdrBin {
                lo_m: i as f64 * self.pdr.bin_width,
                hi_m: (i + 1) as f64 * self.pdr.bin_width,
                successes: s,
                opportunities: o,
                pdr: s as f64 / o as f64,
            })
            .collect();

        let bin = self.cfg.interval_bin_ms;
        let mut hist: Vec<u64> = Vec::new();
        for row in &self.timeseries {
            let i = (row.delta_ms / bin + 1e-9).floor() as usize;
            if hist.len() <= i {
                hist.resize(i + 1, 0);
            }
            hist[i] += 1;
        }
        let interval_histogram = hist
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &count)| IntervalBin { lo_ms: i as f64 * bin, hi_ms: (i + 1) as f64 * bin, count })
            .collect();
        let mean_interval_ms = if self.timeseries.is_empty() {
            0.0
        } else {
            self.timeseries.iter().map(|r| r.delta_ms).sum::<f64>() / self.timeseries.len() as f64
        };

        let mut pair_tracking_error = Vec::new();
        for u in 0..n {
            for v in 0..n {
                let acc = self.pair_te[u * n + v];
                if acc.n > 0 {
                    pair_tracking_error.push(PairTe {
                        sender: u as VehicleId,
                        receiver: v as VehicleId,
                        mean_te: acc.sum / acc.n as f64,
                        samples: acc.n,
                    });
                }
            }
        }

        let vehicles = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| VehicleSummary {
                id: i as VehicleId,
                max_self_te: node.self_te_max,
                mean_interval_ms: if node.epochs > 0 {
                    node.delta_sum_ms / node.epochs as f64
                } else {
                    node.ctrl.delta * 1e3
                },
                epochs: node.epochs,
                risky_epochs: node.risky_epochs,
                congested_epochs: node.congested_epochs,
            })
            .collect();

        RunReport {
            protocol: self.cfg.protocol,
            n_vehicles: n,
            seed: self.cfg.seed,
            duration: self.cfg.duration,
            system_aoi: aoi_area / norm,
            system_taoi: taoi_area / norm,
            collision_risk_count: self.risk_count,
            overall_pdr: self.pdr.overall(),
            pdr_bins,
            interval_histogram,
            mean_interval_ms,
            timeseries: self.timeseries,
            pair_tracking_error,
            vehicles,
            frames: self.frames,
            config: self.cfg.clone(),
        }
    }
}
