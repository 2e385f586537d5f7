//! Broadcast-interval policies: fixed 10 Hz, the AoI-minimizing baseline
//! and the trackability-aware controller.
//!
//! Both adaptive policies run once per measurement interval and move the
//! interval multiplicatively by `beta`. A vehicle whose neighborhood age
//! exceeds twice the mean advertised interval treats the channel as
//! congested and backs off unconditionally.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Incr,
    Decr,
    Same,
}

impl Action {
    pub fn complement(self) -> Self {
        match self {
            Action::Incr => Action::Decr,
            Action::Decr => Action::Incr,
            Action::Same => Action::Same,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    #[default]
    #[serde(rename = "fixed10hz")]
    Fixed10Hz,
    Aoi,
    Taoi,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Fixed10Hz => "fixed10hz",
            Protocol::Aoi => "aoi",
            Protocol::Taoi => "taoi",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed10hz" => Ok(Protocol::Fixed10Hz),
            "aoi" => Ok(Protocol::Aoi),
            "taoi" => Ok(Protocol::Taoi),
            other => Err(format!("unknown protocol {other:?} (expected fixed10hz, aoi or taoi)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid controller parameter: {0}")]
pub struct ControllerError(pub String);

/// Interval used by the fixed policy, seconds.
pub const FIXED_INTERVAL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub beta: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub initial_delta: f64,
    pub t_mi: f64,
    pub eps_cmp: f64,
    /// Fraction of the gap to the neighborhood mean interval closed after
    /// each baseline update.
    pub spread_lambda: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            beta: 1.1,
            delta_min: 0.02,
            delta_max: 1.0,
            initial_delta: 0.1,
            t_mi: 1.0,
            eps_cmp: 1e-9,
            spread_lambda: 0.25,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError(m.to_string()));
        if !(self.beta > 1.0) {
            return bad("controller.beta must exceed 1");
        }
        if !(self.delta_min > 0.0 && self.delta_min <= self.delta_max) {
            return bad("controller.delta_min must be positive and not above delta_max");
        }
        if !(self.initial_delta >= self.delta_min && self.initial_delta <= self.delta_max) {
            return bad("controller.initial_delta must lie in [delta_min, delta_max]");
        }
        if !(FIXED_INTERVAL >= self.delta_min && FIXED_INTERVAL <= self.delta_max) {
            return bad("controller bounds must contain the fixed 100 ms interval");
        }
        if !(self.t_mi > 0.0) {
            return bad("controller.t_mi must be positive");
        }
        if !(self.eps_cmp >= 0.0) || !(0.0..=1.0).contains(&self.spread_lambda) {
            return bad("controller.eps_cmp must be >= 0 and spread_lambda in [0, 1]");
        }
        Ok(())
    }
}

/// Per-vehicle controller memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub cfg: ControllerConfig,
    pub tau_th: f64,
    pub delta: f64,
    pub prev_delta: f64,
    /// Last direction taken. SAME never overwrites it.
    pub omega: Action,
    pub prev_metric: Option<f64>,
    pub riskiness_flag: bool,
}

impl ControllerState {
    pub fn new(cfg: ControllerConfig, tau_th: f64) -> Self {
        let delta = cfg.initial_delta;
        Self {
            cfg,
            tau_th,
            delta,
            prev_delta: delta,
            omega: Action::Decr,
            prev_metric: None,
            riskiness_flag: 0.0 >= tau_th,
        }
    }

    fn apply(&mut self, action: Action) -> (f64, Action) {
        let base = self.delta;
        let next = match action {
            Action::Incr => base * self.cfg.beta,
            Action::Decr => base / self.cfg.beta,
            Action::Same => base,
        };
        self.prev_delta = base;
        self.delta = next.clamp(self.cfg.delta_min, self.cfg.delta_max);
        if action != Action::Same {
            self.omega = action;
        }
        (self.delta, action)
    }

    fn compare(&self, metric: Option<f64>) -> Action {
        match (metric, self.prev_metric) {
            (Some(now), Some(prev)) if now < prev - self.cfg.eps_cmp => self.omega,
            (Some(now), Some(prev)) if now > prev + self.cfg.eps_cmp => self.omega.complement(),
            (Some(_), Some(_)) => Action::Same,
            // No earlier measurement: keep exploring in the current direction.
            _ => self.omega,
        }
    }
}

fn congested(aoi_v: Option<f64>, delta_avg: Option<f64>) -> bool {
    matches!((aoi_v, delta_avg), (Some(a), Some(d)) if a > 2.0 * d)
}

/// Self-risk flag from the self tracking error; stored in `state`.
pub fn assess_self_risk(self_te: f64, state: &mut ControllerState) -> bool {
    state.riskiness_flag = self_te >= state.tau_th;
    state.riskiness_flag
}

/// Trackability-aware update for the measurement interval just finished.
pub fn taoi_rate_update(
    state: &mut ControllerState,
    taoi_v: Option<f64>,
    aoi_v: Option<f64>,
    delta_avg: Option<f64>,
    risky_neighbor_count: usize,
) -> (f64, Action) {
    let action = if congested(aoi_v, delta_avg) {
        Action::Incr
    } else if !state.riskiness_flag {
        Action::Same
    } else if risky_neighbor_count == 0 {
        Action::Decr
    } else {
        state.compare(taoi_v)
    };
    if taoi_v.is_some() {
        state.prev_metric = taoi_v;
    }
    state.apply(action)
}

/// Age-minimizing baseline with spread control toward `delta_avg`.
pub fn aoi_rate_update(
    state: &mut ControllerState,
    aoi_v: Option<f64>,
    delta_avg: Option<f64>,
) -> (f64, Action) {
    let action = if congested(aoi_v, delta_avg) {
        Action::Incr
    } else {
        state.compare(aoi_v)
    };
    if aoi_v.is_some() {
        state.prev_metric = aoi_v;
    }
    let (mut delta, action) = state.apply(action);
    if let Some(avg) = delta_avg {
        let lambda = state.cfg.spread_lambda;
        delta = ((1.0 - lambda) * delta + lambda * avg).clamp(state.cfg.delta_min, state.cfg.delta_max);
        state.delta = delta;
    }
    (delta, action)
}

pub fn fixed_rate(state: &mut ControllerState) -> (f64, Action) {
    state.prev_delta = state.delta;
    state.delta = FIXED_INTERVAL;
    (FIXED_INTERVAL, Action::Same)
}
