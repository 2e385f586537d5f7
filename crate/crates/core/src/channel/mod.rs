//! Shared 5.9 GHz broadcast channel: log-distance path loss, Nakagami-m
//! fading, frame airtime, CSMA access and per-receiver delivery.
//!
//! Carrier sensing and interference use the fading-free mean power, so both
//! reduce to distance checks against [`ChannelConfig::sensing_range`].
//! Only the decoded signal itself sees a fading draw.

mod csma;

pub use csma::{csma_access, BusyInterval, Contention};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

use crate::metrics::Bsm;
use crate::mobility::VehicleState;
use crate::VehicleId;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    Distance(f64),
    #[error("fading multiplier must be positive, got {0}")]
    Fading(f64),
    #[error("invalid channel parameter: {0}")]
    InvalidParam(String),
}

/// One distance band of the Nakagami shape parameter. The band applies to
/// distances below `below_m`; `None` marks the unbounded last band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NakagamiBin {
    pub below_m: Option<f64>,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub tx_power_dbm: f64,
    pub freq_ghz: f64,
    pub bandwidth_mhz: f64,
    pub data_rate_mbps: f64,
    pub path_loss_exponent: f64,
    /// Loss at 1 m.
    pub reference_loss_db: f64,
    pub rx_sensitivity_dbm: f64,
    pub carrier_sense_threshold_dbm: f64,
    pub slot_time_us: f64,
    pub aifs_us: f64,
    pub cw: u32,
    pub preamble_overhead_us: f64,
    pub nakagami_m_bins: Vec<NakagamiBin>,
    /// Frames per slot in idealized slotted mode.
    pub slotted_capacity: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: 20.0,
            freq_ghz: 5.9,
            bandwidth_mhz: 10.0,
            data_rate_mbps: 6.0,
            path_loss_exponent: 3.0,
            reference_loss_db: 47.86,
            rx_sensitivity_dbm: -102.0,
            carrier_sense_threshold_dbm: -102.0,
            slot_time_us: 13.0,
            aifs_us: 58.0,
            cw: 15,
            preamble_overhead_us: 40.0,
            nakagami_m_bins: vec![
                NakagamiBin { below_m: Some(80.0), m: 3.0 },
                NakagamiBin { below_m: Some(200.0), m: 1.5 },
                NakagamiBin { below_m: None, m: 1.0 },
            ],
            slotted_capacity: 1,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: &str| Err(ChannelError::InvalidParam(m.to_string()));
        if !(self.path_loss_exponent > 0.0) {
            return bad("channel.path_loss_exponent must be positive");
        }
        if self.cw < 1 {
            return bad("channel.cw must be >= 1");
        }
        if !(self.data_rate_mbps > 0.0) {
            return bad("channel.data_rate_mbps must be positive");
        }
        if !(self.slot_time_us > 0.0) || self.aifs_us < 0.0 || self.preamble_overhead_us < 0.0 {
            return bad("channel timing values must be non-negative (slot positive)");
        }
        if self.slotted_capacity < 1 {
            return bad("channel.slotted_capacity must be >= 1");
        }
        if self.nakagami_m_bins.is_empty() {
            return bad("channel.nakagami_m_bins must not be empty");
        }
        if self.nakagami_m_bins.iter().any(|b| !(b.m > 0.0)) {
            return bad("channel.nakagami_m_bins m values must be positive");
        }
        if self.nakagami_m_bins.last().and_then(|b| b.below_m).is_some() {
            return bad("channel.nakagami_m_bins must end with an unbounded bin");
        }
        Ok(())
    }

    pub fn slot_time(&self) -> f64 {
        self.slot_time_us * 1e-6
    }

    pub fn aifs(&self) -> f64 {
        self.aifs_us * 1e-6
    }

    /// Distance at which the mean received power equals `threshold_dbm`.
    pub fn range_for(&self, threshold_dbm: f64) -> f64 {
        let margin = self.tx_power_dbm - self.reference_loss_db - threshold_dbm;
        10f64.powf(margin / (10.0 * self.path_loss_exponent))
    }

    /// Mean-power decode range; receivers inside it count as in range.
    pub fn nominal_range(&self) -> f64 {
        self.range_for(self.rx_sensitivity_dbm)
    }

    /// Distance within which a transmission makes the medium busy and
    /// corrupts concurrent receptions.
    pub fn sensing_range(&self) -> f64 {
        self.range_for(self.carrier_sense_threshold_dbm)
    }

    pub fn nakagami_m(&self, d: f64) -> f64 {
        self.nakagami_m_bins
            .iter()
            .find(|b| b.below_m.map_or(true, |lim| d < lim))
            .map_or(1.0, |b| b.m)
    }
}

/// Log-distance path loss in dB with a 1 m reference.
pub fn path_loss_db(d: f64, cfg: &ChannelConfig) -> Result<f64, ChannelError> {
    if !(d > 0.0) {
        return Err(ChannelError::Distance(d));
    }
    Ok(cfg.reference_loss_db + 10.0 * cfg.path_loss_exponent * d.log10())
}

/// Unit-mean Nakagami power multiplier: Gamma(m, 1/m) with m from the
/// distance band.
pub fn nakagami_fading_draw<R: Rng + ?Sized>(rng: &mut R, d: f64, cfg: &ChannelConfig) -> f64 {
    let m = cfg.nakagami_m(d);
    Gamma::new(m, 1.0 / m).expect("positive shape").sample(rng)
}

/// Received power in dBm for a given fading multiplier.
pub fn rx_power_dbm(
    tx_power_dbm: f64,
    d: f64,
    fading: f64,
    cfg: &ChannelConfig,
) -> Result<f64, ChannelError> {
    if !(fading > 0.0) {
        return Err(ChannelError::Fading(fading));
    }
    Ok(tx_power_dbm - path_loss_db(d, cfg)? + 10.0 * fading.log10())
}

/// Airtime in seconds of a `size`-byte frame at `rate_mbps`, preamble included.
pub fn tx_duration(size: u32, rate_mbps: f64, cfg: &ChannelConfig) -> f64 {
    8.0 * size as f64 / (rate_mbps * 1e6) + cfg.preamble_overhead_us * 1e-6
}

/// Fading sampler with one pre-built Gamma per distance band.
#[derive(Debug, Clone)]
pub struct FadingModel {
    bands: Vec<(Option<f64>, Gamma<f64>)>,
}

impl FadingModel {
    pub fn new(cfg: &ChannelConfig) -> Self {
        let bands = cfg
            .nakagami_m_bins
            .iter()
            .map(|b| (b.below_m, Gamma::new(b.m, 1.0 / b.m).expect("validated m")))
            .collect();
        Self { bands }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, d: f64) -> f64 {
        let band = self
            .bands
            .iter()
            .find(|(lim, _)| lim.map_or(true, |l| d < l))
            .unwrap_or_else(|| self.bands.last().expect("non-empty"));
        band.1.sample(rng)
    }
}

/// A frame on the air.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionEvent {
    pub sender: VehicleId,
    pub start: f64,
    pub duration: f64,
    /// Sender position when the frame starts.
    pub origin: (f64, f64),
    pub bsm: Bsm,
}

impl TransmissionEvent {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn overlaps(&self, other: &TransmissionEvent) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Channel math never evaluates path loss inside 1 m.
pub(crate) fn link_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    dist(a, b).max(1.0)
}

/// Receivers of `tx` that decode it: the faded signal must clear the
/// sensitivity and no overlapping frame may reach the receiver above the
/// carrier-sense threshold (no capture). A receiver that is itself
/// transmitting during the frame always fails.
pub fn delivery_outcome<R: Rng + ?Sized>(
    tx: &TransmissionEvent,
    receivers: &[VehicleState],
    concurrent: &[TransmissionEvent],
    rng: &mut R,
    cfg: &ChannelConfig,
) -> BTreeSet<VehicleId> {
    let fading = FadingModel::new(cfg);
    let sense = cfg.sensing_range();
    let overlapping: Vec<&TransmissionEvent> = concurrent
        .iter()
        .filter(|c| *c != tx && c.overlaps(tx))
        .collect();
    let mut ok = BTreeSet::new();
    for r in receivers.iter().filter(|r| r.id != tx.sender) {
        let pos = (r.x, r.y);
        let d = link_distance(tx.origin, pos);
        let f = fading.draw(rng, d);
        let decodable = rx_power_dbm(cfg.tx_power_dbm, d, f, cfg)
            .map_or(false, |p| p >= cfg.rx_sensitivity_dbm);
        let jammed = overlapping
            .iter()
            .any(|c| c.sender == r.id || dist(c.origin, pos) <= sense);
        if decodable && !jammed {
            ok.insert(r.id);
        }
    }
    ok
}
