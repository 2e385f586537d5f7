//! Listen-before-talk access for broadcast frames.
//!
//! [`Contention`] is the per-sender state machine the event loop drives with
//! busy/idle notifications. [`csma_access`] replays it over a known
//! occupancy timeline.

use rand::Rng;

use super::ChannelConfig;
use crate::VehicleId;

/// Slot counting slack so that `since + aifs + k * slot` lands on slot `k`.
const SLOT_EPS: f64 = 1e-9;

/// A period during which the medium is sensed busy by some sender.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusyInterval {
    pub source: VehicleId,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Contention {
    /// Nothing to send.
    #[default]
    Idle,
    /// Medium busy; the remaining backoff is kept frozen.
    Deferring { backoff: u32 },
    /// Medium idle since `since`; the frame starts at `fire_at` unless the
    /// medium turns busy first. `drawn` is false while only the initial
    /// AIFS is being waited out.
    CountingDown {
        since: f64,
        backoff: u32,
        fire_at: f64,
        drawn: bool,
    },
}

fn draw_backoff<R: Rng + ?Sized>(rng: &mut R, cfg: &ChannelConfig) -> u32 {
    rng.gen_range(0..cfg.cw)
}

impl Contention {
    /// A frame becomes ready at `now`. Returns the start instant if it can
    /// already be scheduled.
    pub fn begin<R: Rng + ?Sized>(
        &mut self,
        now: f64,
        busy: bool,
        rng: &mut R,
        cfg: &ChannelConfig,
    ) -> Option<f64> {
        debug_assert!(matches!(self, Contention::Idle));
        if busy {
            *self = Contention::Deferring { backoff: draw_backoff(rng, cfg) };
            None
        } else {
            let fire_at = now + cfg.aifs();
            *self = Contention::CountingDown { since: now, backoff: 0, fire_at, drawn: false };
            Some(fire_at)
        }
    }

    /// The medium turned busy at `now`. A countdown that expires exactly at
    /// `now` is not interrupted: that frame goes out and collides.
    pub fn on_busy<R: Rng + ?Sized>(&mut self, now: f64, rng: &mut R, cfg: &ChannelConfig) {
        if let Contention::CountingDown { since, backoff, fire_at, drawn } = *self {
            if fire_at <= now {
                return;
            }
            let remaining = if drawn {
                let elapsed = now - since - cfg.aifs();
                let used = if elapsed > 0.0 {
                    ((elapsed / cfg.slot_time()) + SLOT_EPS).floor() as u32
                } else {
                    0
                };
                backoff - used.min(backoff)
            } else {
                draw_backoff(rng, cfg)
            };
            *self = Contention::Deferring { backoff: remaining };
        }
    }

    /// The medium turned idle at `now`. Returns the new start instant if a
    /// frame is waiting.
    pub fn on_idle(&mut self, now: f64, cfg: &ChannelConfig) -> Option<f64> {
        if let Contention::Deferring { backoff } = *self {
            let fire_at = now + cfg.aifs() + backoff as f64 * cfg.slot_time();
            *self = Contention::CountingDown { since: now, backoff, fire_at, drawn: true };
            Some(fire_at)
        } else {
            None
        }
    }

    pub fn fire_at(&self) -> Option<f64> {
        match self {
            Contention::CountingDown { fire_at, .. } => Some(*fire_at),
            _ => None,
        }
    }

    /// The frame went on air.
    pub fn finish(&mut self) {
        *self = Contention::Idle;
    }
}

/// Start instant of a frame that becomes ready at `intended_start`, given
/// the busy periods `sender` senses. Intervals may overlap and come in any
/// order.
pub fn csma_access<R: Rng + ?Sized>(
    _sender: VehicleId,
    intended_start: f64,
    timeline: &[BusyInterval],
    rng: &mut R,
    cfg: &ChannelConfig,
) -> f64 {
    let mut spans: Vec<(f64, f64)> = timeline
        .iter()
        .filter(|b| b.end > intended_start)
        .map(|b| (b.start, b.end))
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }

    let mut rest = merged.into_iter().peekable();
    let busy_now = rest.peek().map_or(false, |&(s, _)| s <= intended_start);
    let mut state = Contention::Idle;
    let mut fire = state.begin(intended_start, busy_now, rng, cfg);
    if busy_now {
        let (_, e) = rest.next().expect("peeked");
        fire = state.on_idle(e, cfg);
    }
    loop {
        let at = fire.expect("counting down after an idle edge");
        match rest.next() {
            Some((s, e)) if s < at => {
                state.on_busy(s, rng, cfg);
                fire = state.on_idle(e, cfg);
            }
            _ => return at,
        }
    }
}
