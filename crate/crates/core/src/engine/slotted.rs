//! The idealized slotted channel: at most `slotted_capacity` frames per
//! slot, zero delay, no loss inside the nominal range. Senders that do not
//! get a slot retry in the next one.
//!
//! Every vehicle starts out holding a zero-speed snapshot of every other
//! vehicle taken at t = 0. Tracking error is sampled at each slot before
//! that slot's receptions; age is sampled right after them.

use std::collections::BTreeSet;

use super::{EngineError, World};
use crate::metrics::{pdr_record, Bsm};
use crate::VehicleId;

pub(super) fn run(world: &mut World) -> Result<(), EngineError> {
    let cfg = world.cfg;
    let n = world.n;
    let slot = cfg.mobility_tick;
    let slots = (cfg.duration / slot + 1e-9).floor() as usize;
    world.horizon = slots as f64 * slot;
    let gate = cfg.taoi_gate;

    let start = world.truth_all(0.0)?;
    for v in 0..n {
        for u in (0..n).filter(|&u| u != v) {
            let ctrl = &world.nodes[u].ctrl;
            let mut prior = Bsm::from_state(&start[u], ctrl.riskiness_flag, ctrl.delta);
            prior.speed = 0.0;
            world.nodes[v].records[u]
                .on_reception(&prior, 0.0, gate)
                .map_err(|e| EngineError::Config(e.to_string()))?;
        }
    }

    let t_mi = cfg.controller.t_mi;
    let mut pending_since: Vec<f64> = vec![0.0; n];
    for k in 1..=slots {
        let t = k as f64 * slot;
        let states = world.truth_all(t)?;
        world.sample_tracking(t, &states)?;

        let senders: Vec<usize> = match &cfg.forced_schedule {
            Some(schedule) => schedule
                .get(k - 1)
                .map(|s| s.iter().map(|&id| id as usize).collect())
                .unwrap_or_default(),
            None => {
                let mut ready: Vec<usize> = (0..n).filter(|&v| pending_since[v] <= t).collect();
                ready.sort_by(|&a, &b| pending_since[a].total_cmp(&pending_since[b]).then(a.cmp(&b)));
                ready.truncate(cfg.channel.slotted_capacity);
                ready
            }
        };

        for v in 0..n {
            for u in 0..n {
                if u != v {
                    world.evict_stale(v, u, t);
                    world.nodes[v].records[u].sync_clock(t);
                }
            }
        }
        for &u in &senders {
            let ctrl = &world.nodes[u].ctrl;
            let bsm = Bsm::from_state(&states[u], ctrl.riskiness_flag, ctrl.delta);
            pending_since[u] = t + ctrl.delta;
            world.frames.generated += 1;
            world.frames.transmitted += 1;
            let in_range: Vec<_> = states
                .iter()
                .filter(|s| s.id as usize != u && s.distance_to(&states[u]) <= world.range)
                .copied()
                .collect();
            let ok: BTreeSet<VehicleId> = in_range.iter().map(|s| s.id).collect();
            pdr_record(&states[u], &in_range, &ok, &mut world.pdr)
                .map_err(|e| EngineError::Config(e.to_string()))?;
            for r in &in_range {
                world.nodes[r.id as usize].records[u]
                    .on_reception(&bsm, t, gate)
                    .map_err(|e| EngineError::Config(e.to_string()))?;
                world.frames.link_deliveries += 1;
            }
        }
        for v in 0..n {
            for u in (0..n).filter(|&u| u != v) {
                let rec = &mut world.nodes[v].records[u];
                if rec.last_bsm.is_some() {
                    rec.sample_slot(t, slot)
                        .map_err(|e| EngineError::Config(e.to_string()))?;
                }
            }
        }
        let mi_now = (t / t_mi + 1e-9).fract() < 2e-9;
        if mi_now {
            for v in 0..n {
                world.measurement(v, t)?;
            }
        }
    }
    Ok(())
}
