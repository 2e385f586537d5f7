//! Event loop for the realistic channel.

use rand::Rng;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::{EngineError, QueuePolicy, World};
use crate::channel::{delivery_outcome, tx_duration, Contention, TransmissionEvent};
use crate::metrics::{pdr_record, Bsm};
use crate::mobility::VehicleState;
use crate::rng::{stream, SimRng, Stream};
use crate::VehicleId;

/// Processing order of simultaneous events, first to last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    TxEnd,
    MobilityTick,
    MeasurementInterval,
    BsmGeneration,
    TxStart,
    SimEnd,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    t: f64,
    kind: Kind,
    vehicle: u32,
    seq: u64,
    /// Contention epoch for `TxStart`, frame slot for `TxEnd`.
    token: u64,
}

impl Event {
    fn key(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.kind.cmp(&other.kind))
            .then(self.vehicle.cmp(&other.vehicle))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed: BinaryHeap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key(self)
    }
}

struct Queue {
    heap: BinaryHeap<Event>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, t: f64, kind: Kind, vehicle: usize, token: u64) {
        self.seq += 1;
        self.heap.push(Event { t, kind, vehicle: vehicle as u32, seq: self.seq, token });
    }
}

#[derive(Default)]
struct Radio {
    contention: Contention,
    epoch: u64,
    queue: VecDeque<Bsm>,
    /// Ongoing transmissions this vehicle senses, its own included.
    busy: u32,
    transmitting: bool,
}

struct OnAir {
    tx: TransmissionEvent,
    sensed: Vec<usize>,
    receivers: Vec<VehicleState>,
    overlapped: Vec<usize>,
}

pub(super) fn run(world: &mut World) -> Result<(), EngineError> {
    let cfg = world.cfg;
    let n = world.n;
    let end = cfg.duration;
    let ch = &cfg.channel;
    let sense = ch.sensing_range();
    let mut backoff_rng = stream(cfg.seed, Stream::Backoff);
    let mut fading_rng = stream(cfg.seed, Stream::Fading);
    let mut init_rng = stream(cfg.seed, Stream::Init);

    let mut q = Queue { heap: BinaryHeap::new(), seq: 0 };
    let mut radios: Vec<Radio> = (0..n).map(|_| Radio::default()).collect();
    let mut frames: Vec<Option<OnAir>> = Vec::new();
    let mut live: Vec<usize> = Vec::new();
    let jitter = cfg.generation_jitter;
    let mut jitter_rng = stream(cfg.seed, Stream::Jitter);
    let mut draw_jitter = move || if jitter > 0.0 { jitter_rng.gen_range(0.0..jitter) } else { 0.0 };

    // Nominal generation clock; events fire at nominal time plus jitter.
    let mut nominal = vec![0.0; n];
    for v in 0..n {
        nominal[v] = init_rng.gen_range(0.0..cfg.controller.initial_delta);
        let at = nominal[v] + draw_jitter();
        if at < end {
            q.push(at, Kind::BsmGeneration, v, 0);
        }
    }
    let tick = cfg.mobility_tick;
    let ticks = (end / tick + 1e-9).floor() as u64;
    for k in 1..=ticks {
        q.push(k as f64 * tick, Kind::MobilityTick, 0, k);
    }
    let t_mi = cfg.controller.t_mi;
    let mis = (end / t_mi + 1e-9).floor() as u64;
    for k in 1..=mis {
        for v in 0..n {
            q.push(k as f64 * t_mi, Kind::MeasurementInterval, v, 0);
        }
    }
    q.push(end, Kind::SimEnd, 0, 0);

    let schedule_start = |q: &mut Queue, radio: &Radio, v: usize, at: Option<f64>| {
        if let Some(at) = at {
            q.push(at, Kind::TxStart, v, radio.epoch);
        }
    };

    while let Some(ev) = q.heap.pop() {
        let t = ev.t;
        let v = ev.vehicle as usize;
        match ev.kind {
            Kind::SimEnd => break,
            Kind::MobilityTick => {
                let states = world.table.states_at_index(ev.token as usize);
                world.sample_tracking(t, &states)?;
            }
            Kind::MeasurementInterval => world.measurement(v, t)?,
            Kind::BsmGeneration => {
                let node = &world.nodes[v];
                let delta = node.ctrl.delta;
                let bsm = Bsm::from_state(&world.truth(v, t)?, node.ctrl.riskiness_flag, delta);
                world.frames.generated += 1;
                nominal[v] += delta;
                let at = nominal[v] + draw_jitter();
                if at < end {
                    q.push(at, Kind::BsmGeneration, v, 0);
                }
                let r = &mut radios[v];
                if cfg.queue == QueuePolicy::Replace && !r.queue.is_empty() {
                    r.queue.clear();
                    world.frames.replaced += 1;
                }
                r.queue.push_back(bsm);
                if r.queue.len() == 1 && !r.transmitting && r.contention == Contention::Idle {
                    let at = r.contention.begin(t, r.busy > 0, &mut backoff_rng, ch);
                    r.epoch += 1;
                    schedule_start(&mut q, r, v, at);
                }
            }
            Kind::TxStart => {
                let r = &radios[v];
                if ev.token != r.epoch || r.contention.fire_at() != Some(t) {
                    continue;
                }
                let states = world.truth_all(t)?;
                let r = &mut radios[v];
                let bsm = r.queue.pop_front().expect("a contending radio holds a frame");
                r.contention.finish();
                r.epoch += 1;
                r.transmitting = true;
                let origin = (states[v].x, states[v].y);
                let tx = TransmissionEvent {
                    sender: v as VehicleId,
                    start: t,
                    duration: tx_duration(bsm.size_bytes, ch.data_rate_mbps, ch),
                    origin,
                    bsm,
                };
                let sensed: Vec<usize> = (0..n)
                    .filter(|&w| {
                        w == v || (states[w].x - origin.0).hypot(states[w].y - origin.1) <= sense
                    })
                    .collect();
                for &w in &sensed {
                    let rw = &mut radios[w];
                    rw.busy += 1;
                    if rw.busy == 1 && w != v {
                        let before = rw.contention;
                        rw.contention.on_busy(t, &mut backoff_rng, ch);
                        if rw.contention != before {
                            rw.epoch += 1;
                        }
                    }
                }
                let slot = frames.len();
                for &other in &live {
                    if let Some(f) = frames[other].as_mut() {
                        f.overlapped.push(slot);
                    }
                }
                let end_t = tx.end();
                let receivers = states.into_iter().filter(|s| s.id as usize != v).collect();
                frames.push(Some(OnAir { tx, sensed, receivers, overlapped: live.clone() }));
                live.push(slot);
                q.push(end_t, Kind::TxEnd, v, slot as u64);
            }
            Kind::TxEnd => {
                let slot = ev.token as usize;
                live.retain(|&s| s != slot);
                let f = frames[slot].as_ref().expect("frame ends once");
                for &w in &f.sensed {
                    let rw = &mut radios[w];
                    rw.busy -= 1;
                    if rw.busy == 0 {
                        let at = rw.contention.on_idle(t, ch);
                        if at.is_some() {
                            rw.epoch += 1;
                        }
                        schedule_start(&mut q, rw, w, at);
                    }
                }
                deliver(world, &frames, slot, t, &mut fading_rng)?;
                world.frames.transmitted += 1;
                let r = &mut radios[v];
                r.transmitting = false;
                if !r.queue.is_empty() && r.contention == Contention::Idle {
                    let at = r.contention.begin(t, r.busy > 0, &mut backoff_rng, ch);
                    r.epoch += 1;
                    schedule_start(&mut q, r, v, at);
                }
                // Frames only matter while something they overlapped is on air.
                if live.is_empty() {
                    frames.clear();
                }
            }
        }
    }

    world.frames.on_air_at_end = live.len() as u64;
    world.frames.queued_at_end = radios.iter().map(|r| r.queue.len() as u64).sum();
    Ok(())
}

fn deliver(
    world: &mut World,
    frames: &[Option<OnAir>],
    slot: usize,
    t: f64,
    rng: &mut SimRng,
) -> Result<(), EngineError> {
    let f = frames[slot].as_ref().expect("frame present");
    let concurrent: Vec<TransmissionEvent> = f
        .overlapped
        .iter()
        .filter_map(|&o| frames[o].as_ref().map(|x| x.tx.clone()))
        .collect();
    let ok = delivery_outcome(&f.tx, &f.receivers, &concurrent, rng, &world.cfg.channel);
    let sender = &f.tx;
    let origin = sender.origin;
    let in_range: Vec<VehicleState> = f
        .receivers
        .iter()
        .filter(|r| (r.x - origin.0).hypot(r.y - origin.1) <= world.range)
        .copied()
        .collect();
    let counted = ok
        .iter()
        .copied()
        .filter(|id| in_range.iter().any(|r| r.id == *id))
        .collect();
    let mut sender_state = world.truth(sender.sender as usize, sender.start)?;
    sender_state.x = origin.0;
    sender_state.y = origin.1;
    pdr_record(&sender_state, &in_range, &counted, &mut world.pdr)
        .map_err(|e| EngineError::Config(e.to_string()))?;
    let gate = world.cfg.taoi_gate;
    let u = sender.sender as usize;
    for &r in &ok {
        world.nodes[r as usize].records[u]
            .on_reception(&sender.bsm, t, gate)
            .map_err(|e| EngineError::Config(format!("clock inconsistency: {e}")))?;
        world.frames.link_deliveries += 1;
    }
    Ok(())
}
