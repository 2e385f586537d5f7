//! Age of information and trackability-aware age per sender-receiver pair.
//!
//! A [`NeighborRecord`] integrates the sawtooth age curve of one sender as
//! seen by one receiver. Areas are kept twice: for the current measurement
//! window (drained by [`NeighborRecord::take_window`]) and for the whole run.
//! The gated curve only accrues while the gate is open; the gate follows the
//! sender's piggybacked flag or, with [`TaoiGate::Receiver`], the receiver's
//! own flag.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Bsm;
use crate::VehicleId;

#[derive(Debug, Error, PartialEq)]
pub enum AoiError {
    #[error("no message received from this neighbor yet")]
    NoReception,
    #[error("empty averaging window")]
    EmptyWindow,
    #[error("message generated at {gen_time} received at {t}")]
    FromTheFuture { gen_time: f64, t: f64 },
    #[error("time {t} precedes accounted time {until}")]
    Backwards { t: f64, until: f64 },
}

/// Whose riskiness opens the TAoI gate of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaoiGate {
    #[default]
    Sender,
    Receiver,
}

/// Tolerance for clock comparisons between events at the same instant.
const CLOCK_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRecord {
    pub neighbor: VehicleId,
    pub last_bsm: Option<Bsm>,
    pub last_reception: f64,
    pub gate_open: bool,
    pub accounted_until: f64,
    pub window_aoi_area: f64,
    pub window_taoi_area: f64,
    /// Time within the current window during which the age was defined.
    pub window_covered: f64,
    pub run_aoi_area: f64,
    pub run_taoi_area: f64,
    pub neighbor_risky: bool,
    pub neighbor_interval: f64,
    pub last_seen: f64,
}

impl NeighborRecord {
    pub fn new(neighbor: VehicleId) -> Self {
        Self {
            neighbor,
            last_bsm: None,
            last_reception: 0.0,
            gate_open: false,
            accounted_until: 0.0,
            window_aoi_area: 0.0,
            window_taoi_area: 0.0,
            window_covered: 0.0,
            run_aoi_area: 0.0,
            run_taoi_area: 0.0,
            neighbor_risky: false,
            neighbor_interval: 0.0,
            last_seen: 0.0,
        }
    }

    /// Integrates the age curve up to `t`.
    pub fn advance(&mut self, t: f64) -> Result<(), AoiError> {
        if t < self.accounted_until - CLOCK_EPS {
            return Err(AoiError::Backwards { t, until: self.accounted_until });
        }
        if let Some(bsm) = &self.last_bsm {
            let dt = t - self.accounted_until;
            if dt > 0.0 {
                let a0 = self.accounted_until - bsm.gen_time;
                let a1 = t - bsm.gen_time;
                let area = 0.5 * (a0 + a1) * dt;
                self.window_aoi_area += area;
                self.run_aoi_area += area;
                self.window_covered += dt;
                if self.gate_open {
                    self.window_taoi_area += area;
                    self.run_taoi_area += area;
                }
            }
        }
        self.accounted_until = self.accounted_until.max(t);
        Ok(())
    }

    /// Discrete accounting for slotted operation: adds the current age times
    /// `slot_len` without integrating.
    pub fn sample_slot(&mut self, t: f64, slot_len: f64) -> Result<(), AoiError> {
        let bsm = self.last_bsm.as_ref().ok_or(AoiError::NoReception)?;
        let area = (t - bsm.gen_time) * slot_len;
        self.window_aoi_area += area;
        self.run_aoi_area += area;
        self.window_covered += slot_len;
        if self.gate_open {
            self.window_taoi_area += area;
            self.run_taoi_area += area;
        }
        self.accounted_until = t;
        Ok(())
    }

    /// Moves the accounting clock to `t` without adding area; slotted
    /// operation accounts through [`Self::sample_slot`] instead.
    pub fn sync_clock(&mut self, t: f64) {
        self.accounted_until = t;
    }

    /// Closes the area at `t` with the pre-reception age, then resets the
    /// age to `t - bsm.gen_time`. A message older than the one held keeps
    /// the age but still refreshes liveness.
    pub fn on_reception(&mut self, bsm: &Bsm, t: f64, gate: TaoiGate) -> Result<(), AoiError> {
        if bsm.gen_time > t + CLOCK_EPS {
            return Err(AoiError::FromTheFuture { gen_time: bsm.gen_time, t });
        }
        if self.last_bsm.is_some() {
            self.advance(t)?;
        } else {
            self.accounted_until = t;
        }
        let newer = self.last_bsm.map_or(true, |b| bsm.gen_time >= b.gen_time);
        if newer {
            self.last_bsm = Some(*bsm);
            self.neighbor_risky = bsm.riskiness_flag;
            self.neighbor_interval = bsm.interval;
            if gate == TaoiGate::Sender {
                self.gate_open = bsm.riskiness_flag;
            }
        }
        self.last_reception = t;
        self.last_seen = t;
        Ok(())
    }

    /// Sets the gate from `t` on (receiver gating).
    pub fn set_gate(&mut self, t: f64, open: bool) -> Result<(), AoiError> {
        self.advance(t)?;
        self.gate_open = open;
        Ok(())
    }

    /// Returns `(aoi_area, taoi_area, covered)` of the current window and
    /// starts a new one.
    pub fn take_window(&mut self) -> (f64, f64, f64) {
        let out = (self.window_aoi_area, self.window_taoi_area, self.window_covered);
        self.window_aoi_area = 0.0;
        self.window_taoi_area = 0.0;
        self.window_covered = 0.0;
        out
    }
}

pub fn instantaneous_aoi(record: &NeighborRecord, t: f64) -> Result<f64, AoiError> {
    let bsm = record.last_bsm.as_ref().ok_or(AoiError::NoReception)?;
    Ok(t - bsm.gen_time)
}

pub fn instantaneous_taoi(record: &NeighborRecord, t: f64) -> Result<f64, AoiError> {
    let a = instantaneous_aoi(record, t)?;
    Ok(if record.gate_open { a } else { 0.0 })
}

/// Run-long time average of the pair's age over a window of length
/// `window` (the record must be advanced to the window end).
pub fn average_pairwise_aoi(record: &NeighborRecord, window: f64) -> Result<f64, AoiError> {
    if !(window > 0.0) {
        return Err(AoiError::EmptyWindow);
    }
    Ok(record.run_aoi_area / window)
}

pub fn average_pairwise_taoi(record: &NeighborRecord, window: f64) -> Result<f64, AoiError> {
    if !(window > 0.0) {
        return Err(AoiError::EmptyWindow);
    }
    Ok(record.run_taoi_area / window)
}

/// Mean of the pairwise averages of one receiver's neighbors.
pub fn vehicle_aoi(pairwise: &[f64]) -> Result<f64, AoiError> {
    if pairwise.is_empty() {
        return Err(AoiError::NoReception);
    }
    Ok(pairwise.iter().sum::<f64>() / pairwise.len() as f64)
}

/// Sum of ordered-pair averages normalized by `n (n - 1)`.
pub fn system_aoi(pairwise: &[f64], n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    pairwise.iter().sum::<f64>() / (n * (n - 1)) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleTaoi {
    pub value: f64,
    /// Set when no neighbor currently flags itself risky; `value` is 0 then.
    pub no_risky_neighbors: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaoiAggregate {
    /// `(sender, receiver, average)` for every pair with history.
    pub pairwise: Vec<(VehicleId, VehicleId, f64)>,
    pub per_vehicle: Vec<VehicleTaoi>,
    pub system: f64,
}

/// Gated averages over a window of length `window`. `tables[v]` holds the
/// records kept by receiver `v`.
pub fn aggregate_taoi(tables: &[&[NeighborRecord]], window: f64) -> Result<TaoiAggregate, AoiError> {
    if !(window > 0.0) {
        return Err(AoiError::EmptyWindow);
    }
    let mut pairwise = Vec::new();
    let mut per_vehicle = Vec::with_capacity(tables.len());
    for (v, records) in tables.iter().enumerate() {
        let mut risky = Vec::new();
        for r in records.iter().filter(|r| r.last_bsm.is_some()) {
            let val = r.run_taoi_area / window;
            pairwise.push((r.neighbor, v as VehicleId, val));
            if r.neighbor_risky {
                risky.push(val);
            }
        }
        per_vehicle.push(match vehicle_aoi(&risky) {
            Ok(value) => VehicleTaoi { value, no_risky_neighbors: false },
            Err(_) => VehicleTaoi { value: 0.0, no_risky_neighbors: true },
        });
    }
    let vals: Vec<f64> = pairwise.iter().map(|p| p.2).collect();
    let system = system_aoi(&vals, tables.len());
    Ok(TaoiAggregate { pairwise, per_vehicle, system })
}

/// Every aggregation level of both ages over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiSnapshot {
    pub window: (f64, f64),
    /// `(sender, receiver, aoi, taoi)`.
    pub pairwise: Vec<(VehicleId, VehicleId, f64, f64)>,
    /// Per receiver; `None` without any neighbor history.
    pub vehicle_aoi: Vec<Option<f64>>,
    pub vehicle_taoi: Vec<VehicleTaoi>,
    pub system_aoi: f64,
    pub system_taoi: f64,
}

impl AoiSnapshot {
    pub fn from_tables(tables: &[&[NeighborRecord]], window: (f64, f64)) -> Result<Self, AoiError> {
        let len = window.1 - window.0;
        let taoi = aggregate_taoi(tables, len)?;
        let mut pairwise = Vec::new();
        let mut vehicle = Vec::with_capacity(tables.len());
        for (v, records) in tables.iter().enumerate() {
            let mut mine = Vec::new();
            for r in records.iter().filter(|r| r.last_bsm.is_some()) {
                let a = average_pairwise_aoi(r, len)?;
                mine.push(a);
                pairwise.push((r.neighbor, v as VehicleId, a, r.run_taoi_area / len));
            }
            vehicle.push(vehicle_aoi(&mine).ok());
        }
        let vals: Vec<f64> = pairwise.iter().map(|p| p.2).collect();
        Ok(Self {
            window,
            system_aoi: system_aoi(&vals, tables.len()),
            system_taoi: taoi.system,
            pairwise,
            vehicle_aoi: vehicle,
            vehicle_taoi: taoi.per_vehicle,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bsm(sender: VehicleId, gen_time: f64, flag: bool) -> Bsm {
        Bsm { riskiness_flag: flag, ..Bsm::test_at(sender, gen_time, 0.0, 0.0) }
    }

    #[test]
    fn instantaneous_examples() {
        let mut r = NeighborRecord::new(1);
        assert_eq!(instantaneous_aoi(&r, 1.0), Err(AoiError::NoReception));
        r.on_reception(&bsm(1, 1.0, true), 1.0, TaoiGate::Sender).unwrap();
        assert_eq!(instantaneous_aoi(&r, 1.0).unwrap(), 0.0);
        assert!((instantaneous_aoi(&r, 1.35).unwrap() - 0.35).abs() < 1e-12);
        assert!((instantaneous_taoi(&r, 1.35).unwrap() - 0.35).abs() < 1e-12);
        let d = instantaneous_aoi(&r, 2.0).unwrap() - instantaneous_aoi(&r, 1.7).unwrap();
        assert!((d - 0.3).abs() < 1e-12);
        r.on_reception(&bsm(1, 2.0, false), 2.0, TaoiGate::Sender).unwrap();
        assert_eq!(instantaneous_taoi(&r, 2.5).unwrap(), 0.0);
    }

    #[test]
    fn reception_resets_to_delay() {
        let mut r = NeighborRecord::new(1);
        r.on_reception(&bsm(1, 3.0, false), 3.0015, TaoiGate::Sender).unwrap();
        assert!((instantaneous_aoi(&r, 3.0015).unwrap() - 0.0015).abs() < 1e-12);
        assert!(r.on_reception(&bsm(1, 5.0, false), 4.0, TaoiGate::Sender).is_err());
    }

    #[test]
    fn periodic_sawtooth_averages_half_interval() {
        let mut r = NeighborRecord::new(1);
        let delta = 0.1;
        for k in 0..=50 {
            let t = k as f64 * delta;
            r.on_reception(&bsm(1, t, true), t, TaoiGate::Sender).unwrap();
        }
        let avg = average_pairwise_aoi(&r, 5.0).unwrap();
        assert!((avg - delta / 2.0).abs() < 1e-12);
        assert_eq!(r.run_taoi_area, r.run_aoi_area);
    }

    #[test]
    fn gating_applies_from_reception_on() {
        let mut r = NeighborRecord::new(1);
        r.on_reception(&bsm(1, 0.0, false), 0.0, TaoiGate::Sender).unwrap();
        r.on_reception(&bsm(1, 1.0, true), 1.0, TaoiGate::Sender).unwrap();
        r.advance(2.0).unwrap();
        assert!((r.run_aoi_area - 1.0).abs() < 1e-12);
        assert!((r.run_taoi_area - 0.5).abs() < 1e-12);
        // Same flag again changes nothing retroactively.
        let before = r.run_taoi_area;
        r.on_reception(&bsm(1, 2.0, true), 2.0, TaoiGate::Sender).unwrap();
        assert_eq!(r.run_taoi_area, before);
    }

    #[test]
    fn aggregation_examples() {
        assert_eq!(vehicle_aoi(&[0.5]).unwrap(), 0.5);
        assert_eq!(vehicle_aoi(&[0.5, 2.5]).unwrap(), 1.5);
        assert!(vehicle_aoi(&[]).is_err());
        assert_eq!(system_aoi(&[0.5, 0.5], 2), 0.5);
        assert!((system_aoi(&[2.5, 1.0 / 6.0], 2) - 1.334).abs() < 1e-3);
        assert_eq!(system_aoi(&[0.0; 6], 3), 0.0);
    }

    #[test]
    fn taoi_aggregate_reduces_and_vanishes() {
        let mut a = NeighborRecord::new(1);
        let mut b = NeighborRecord::new(0);
        for (r, s) in [(&mut a, 1), (&mut b, 0)] {
            r.on_reception(&bsm(s, 0.0, true), 0.0, TaoiGate::Sender).unwrap();
            r.advance(2.0).unwrap();
        }
        let t0 = [a.clone()];
        let t1 = [b.clone()];
        let snap = AoiSnapshot::from_tables(&[&t0, &t1], (0.0, 2.0)).unwrap();
        assert_eq!(snap.system_aoi, snap.system_taoi);

        for (r, s) in [(&mut a, 1), (&mut b, 0)] {
            r.on_reception(&bsm(s, 2.0, false), 2.0, TaoiGate::Sender).unwrap();
            r.run_taoi_area = 0.0;
            r.advance(3.0).unwrap();
        }
        let t0 = [a];
        let t1 = [b];
        let agg = aggregate_taoi(&[&t0, &t1], 3.0).unwrap();
        assert_eq!(agg.system, 0.0);
        assert!(agg.per_vehicle.iter().all(|v| v.no_risky_neighbors && v.value == 0.0));
    }

    #[test]
    fn receiver_gate_ignores_sender_flag() {
        let mut r = NeighborRecord::new(1);
        r.on_reception(&bsm(1, 0.0, true), 0.0, TaoiGate::Receiver).unwrap();
        r.advance(1.0).unwrap();
        assert_eq!(r.run_taoi_area, 0.0);
        r.set_gate(1.0, true).unwrap();
        r.advance(2.0).unwrap();
        assert!((r.run_taoi_area - 1.5).abs() < 1e-12);
    }
}
