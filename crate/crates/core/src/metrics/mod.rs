//! Kinematic and safety metrics: dead-reckoning extrapolation, tracking
//! error, self tracking error, time-to-collision error, collision-risk
//! instances and distance-binned packet delivery ratio.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::mobility::VehicleState;
use crate::VehicleId;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("query time {t} precedes generation time {gen_time}")]
    BeforeGeneration { t: f64, gen_time: f64 },
    #[error("no samples in window")]
    EmptyWindow,
    #[error("states belong to different vehicles ({0} vs {1})")]
    VehicleMismatch(VehicleId, VehicleId),
    #[error("receiver {0} decoded a frame but is not in range")]
    SuccessOutOfRange(VehicleId),
}

/// Default BSM payload size in bytes.
pub const BSM_SIZE_BYTES: u32 = 1000;

/// Broadcast safety message: a snapshot of the sender plus its current
/// riskiness flag and broadcast interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bsm {
    pub sender: VehicleId,
    pub gen_time: f64,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
    pub riskiness_flag: bool,
    /// Sender's broadcast interval in seconds.
    pub interval: f64,
    pub size_bytes: u32,
}

impl Bsm {
    pub fn from_state(state: &VehicleState, riskiness_flag: bool, interval: f64) -> Self {
        Self {
            sender: state.id,
            gen_time: state.t,
            x: state.x,
            y: state.y,
            speed: state.speed,
            heading: state.heading,
            riskiness_flag,
            interval,
            size_bytes: BSM_SIZE_BYTES,
        }
    }

    #[cfg(test)]
    pub(crate) fn test_at(sender: VehicleId, gen_time: f64, x: f64, y: f64) -> Self {
        Self {
            sender,
            gen_time,
            x,
            y,
            speed: 0.0,
            heading: 0.0,
            riskiness_flag: false,
            interval: 0.1,
            size_bytes: BSM_SIZE_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    pub t_react: f64,
    /// Braking deceleration, m/s^2.
    pub decel: f64,
    pub rel_speed_floor: f64,
    /// Self tracking error at or above which a vehicle calls itself risky.
    pub te_threshold: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self { t_react: 1.0, decel: 4.6, rel_speed_floor: 0.1, te_threshold: 0.5 }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_react > 0.0 && self.decel > 0.0 && self.rel_speed_floor > 0.0) {
            return Err("safety.t_react, safety.decel and safety.rel_speed_floor must be positive".into());
        }
        if !(self.te_threshold >= 0.0) {
            return Err("safety.te_threshold must be non-negative".into());
        }
        Ok(())
    }
}

/// Linear extrapolation of the sender position to time `t`.
pub fn estimate_position(bsm: &Bsm, t: f64) -> Result<(f64, f64), MetricsError> {
    let dt = t - bsm.gen_time;
    if dt < 0.0 {
        return Err(MetricsError::BeforeGeneration { t, gen_time: bsm.gen_time });
    }
    Ok((
        bsm.x + bsm.speed * bsm.heading.cos() * dt,
        bsm.y + bsm.speed * bsm.heading.sin() * dt,
    ))
}

pub fn tracking_error(truth: &VehicleState, estimate: (f64, f64)) -> f64 {
    (truth.x - estimate.0).hypot(truth.y - estimate.1)
}

/// Mean of uniformly spaced tracking-error samples.
pub fn average_tracking_error(samples: &[f64]) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyWindow);
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Error between where a vehicle is and where it would have predicted
/// itself `t_mi` ago from its own kinematics.
pub fn self_tracking_error(
    now: &VehicleState,
    prev: &VehicleState,
    t_mi: f64,
) -> Result<f64, MetricsError> {
    if now.id != prev.id {
        return Err(MetricsError::VehicleMismatch(now.id, prev.id));
    }
    let ex = prev.x + prev.speed * prev.heading.cos() * t_mi;
    let ey = prev.y + prev.speed * prev.heading.sin() * t_mi;
    Ok(tracking_error(now, (ex, ey)))
}

/// Magnitude of the relative velocity vector.
pub fn relative_speed(a: &VehicleState, b: &VehicleState) -> f64 {
    let (ax, ay) = a.velocity();
    let (bx, by) = b.velocity();
    (ax - bx).hypot(ay - by)
}

pub fn delta_ttc(te: f64, rel_speed: f64, params: &SafetyParams) -> f64 {
    te / rel_speed.abs().max(params.rel_speed_floor)
}

/// Reaction plus braking time at `speed`.
pub fn ttc_threshold(speed: f64, params: &SafetyParams) -> f64 {
    params.t_react + speed / params.decel
}

pub fn collision_risk_indicator(delta_ttc: f64, threshold: f64) -> bool {
    delta_ttc > threshold
}

/// Link-level delivery counters binned by sender-receiver distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdrCounters {
    pub bin_width: f64,
    pub transmissions: BTreeMap<VehicleId, u64>,
    /// `(successes, opportunities)` per bin, bin `i` covering
    /// `[i * bin_width, (i + 1) * bin_width)`.
    pub bins: Vec<(u64, u64)>,
}

impl PdrCounters {
    pub fn new(bin_width: f64) -> Self {
        Self { bin_width, transmissions: BTreeMap::new(), bins: Vec::new() }
    }

    pub fn record_link(&mut self, distance: f64, success: bool) {
        let i = (distance / self.bin_width).floor().max(0.0) as usize;
        if self.bins.len() <= i {
            self.bins.resize(i + 1, (0, 0));
        }
        self.bins[i].1 += 1;
        if success {
            self.bins[i].0 += 1;
        }
    }

    pub fn bin_pdr(&self, i: usize) -> Option<f64> {
        self.bins
            .get(i)
            .filter(|b| b.1 > 0)
            .map(|&(s, o)| s as f64 / o as f64)
    }

    /// `(lo, hi, pdr)` for every bin with at least one opportunity.
    pub fn table(&self) -> Vec<(f64, f64, f64)> {
        (0..self.bins.len())
            .filter_map(|i| {
                self.bin_pdr(i).map(|p| {
                    (i as f64 * self.bin_width, (i + 1) as f64 * self.bin_width, p)
                })
            })
            .collect()
    }

    pub fn overall(&self) -> Option<f64> {
        let (s, o) = self.bins.iter().fold((0, 0), |acc, b| (acc.0 + b.0, acc.1 + b.1));
        (o > 0).then(|| s as f64 / o as f64)
    }
}

/// Accounts one transmission: every in-range receiver is one opportunity
/// in the bin of its distance to the sender.
pub fn pdr_record(
    sender: &VehicleState,
    in_range: &[VehicleState],
    successes: &BTreeSet<VehicleId>,
    counters: &mut PdrCounters,
) -> Result<(), MetricsError> {
    if let Some(&stray) = successes.iter().find(|id| !in_range.iter().any(|r| r.id == **id)) {
        return Err(MetricsError::SuccessOutOfRange(stray));
    }
    *counters.transmissions.entry(sender.id).or_default() += 1;
    for r in in_range {
        counters.record_link(sender.distance_to(r), successes.contains(&r.id));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn at(id: VehicleId, x: f64, y: f64, speed: f64, heading: f64, t: f64) -> VehicleState {
        VehicleState { id, x, y, speed, heading, lane: 0, t }
    }

    #[test]
    fn extrapolation_along_y() {
        let bsm = Bsm::from_state(&at(1, 0.0, 4.0, 4.0, FRAC_PI_2, 2.0), false, 1.0);
        let (x, y) = estimate_position(&bsm, 3.0).unwrap();
        assert!(x.abs() < 1e-12 && (y - 8.0).abs() < 1e-12);
        let (_, y) = estimate_position(&bsm, 4.0).unwrap();
        assert!((y - 12.0).abs() < 1e-12);
        assert_eq!(estimate_position(&bsm, 2.0).unwrap(), (0.0, 4.0));
        assert!(estimate_position(&bsm, 1.0).is_err());
    }

    #[test]
    fn tracking_error_examples() {
        let truth = at(1, 0.0, 16.0, 0.0, 0.0, 4.0);
        assert_eq!(tracking_error(&truth, (0.0, 12.0)), 4.0);
        assert_eq!(tracking_error(&truth, (0.0, 15.0)), 1.0);
        assert_eq!(tracking_error(&truth, (0.0, 16.0)), 0.0);
    }

    #[test]
    fn average_tracking_error_examples() {
        assert_eq!(average_tracking_error(&[1.0, 4.0, 1.0, 4.0, 1.0, 4.0]).unwrap(), 2.5);
        assert_eq!(average_tracking_error(&[1.0, 4.0, 1.0, 1.0, 1.0, 1.0]).unwrap(), 1.5);
        assert_eq!(average_tracking_error(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(average_tracking_error(&[]), Err(MetricsError::EmptyWindow));
    }

    #[test]
    fn self_tracking_error_examples() {
        let a = at(3, 0.0, 0.0, 10.0, 0.3, 0.0);
        let (vx, vy) = a.velocity();
        let b = at(3, vx, vy, 10.0, 0.3, 1.0);
        assert!(self_tracking_error(&b, &a, 1.0).unwrap() < 1e-12);
        // y = t^2 sampled at t = 1 (y 1, speed 2) and t = 2 (y 4).
        let prev = at(3, 0.0, 1.0, 2.0, FRAC_PI_2, 1.0);
        let now = at(3, 0.0, 4.0, 4.0, FRAC_PI_2, 2.0);
        assert!((self_tracking_error(&now, &prev, 1.0).unwrap() - 1.0).abs() < 1e-12);
        // Quarter turn: predicted 10 m ahead, actually 10 m to the side.
        let prev = at(3, 0.0, 0.0, 10.0, 0.0, 0.0);
        let now = at(3, 0.0, 10.0, 10.0, FRAC_PI_2, 1.0);
        let e = self_tracking_error(&now, &prev, 1.0).unwrap();
        assert!((e - 10.0 * 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(
            self_tracking_error(&now, &at(4, 0.0, 0.0, 0.0, 0.0, 0.0), 1.0),
            Err(MetricsError::VehicleMismatch(3, 4))
        );
    }

    #[test]
    fn ttc_examples() {
        let p = SafetyParams::default();
        assert_eq!(delta_ttc(5.0, 2.0, &p), 2.5);
        assert_eq!(delta_ttc(0.0, 3.0, &p), 0.0);
        assert!((delta_ttc(5.0, 0.0, &p) - 50.0).abs() < 1e-12);
        assert!((ttc_threshold(23.0, &p) - 6.0).abs() < 1e-12);
        assert_eq!(ttc_threshold(0.0, &p), 1.0);
        assert!((ttc_threshold(4.6, &p) - 2.0).abs() < 1e-12);
        assert!(collision_risk_indicator(7.0, 6.0));
        assert!(!collision_risk_indicator(6.0, 6.0));
        assert!(!collision_risk_indicator(0.0, 1.0));
    }

    #[test]
    fn relative_speed_is_vector_difference() {
        let a = at(0, 0.0, 0.0, 10.0, 0.0, 0.0);
        let b = at(1, 0.0, 0.0, 10.0, FRAC_PI_2, 0.0);
        assert!((relative_speed(&a, &b) - 10.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!(relative_speed(&a, &a) < 1e-12);
    }

    #[test]
    fn pdr_bookkeeping() {
        let mut c = PdrCounters::new(25.0);
        let s = at(0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let rx: Vec<_> = (1..=3).map(|i| at(i, i as f64, 0.0, 0.0, 0.0, 0.0)).collect();
        pdr_record(&s, &rx, &[1, 3].into_iter().collect(), &mut c).unwrap();
        assert!((c.bin_pdr(0).unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let before = c.clone();
        let mut after = c.clone();
        pdr_record(&s, &[], &BTreeSet::new(), &mut after).unwrap();
        assert_eq!(before.bins, after.bins);

        let mut c = PdrCounters::new(25.0);
        let near: Vec<_> = (1..=4).map(|i| at(i, 5.0 * i as f64, 0.0, 0.0, 0.0, 0.0)).collect();
        let far: Vec<_> = (5..=8).map(|i| at(i, 100.0 + i as f64, 0.0, 0.0, 0.0, 0.0)).collect();
        pdr_record(&s, &near, &(1..=4).collect(), &mut c).unwrap();
        pdr_record(&s, &far, &[6].into_iter().collect(), &mut c).unwrap();
        assert_eq!(c.bin_pdr(0), Some(1.0));
        assert_eq!(c.bin_pdr(4), Some(0.25));
        assert_eq!(c.transmissions[&0], 2);

        let err = pdr_record(&s, &near, &[9].into_iter().collect(), &mut c);
        assert_eq!(err, Err(MetricsError::SuccessOutOfRange(9)));
    }
}
