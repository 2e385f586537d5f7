use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MobilityError, RoadConfig, TrajectoryTable, VehicleState};
use crate::VehicleId;

/// Krauss car-following parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KraussParams {
    /// m/s²
    pub max_accel: f64,
    /// m/s², also the braking deceleration used for the TTC threshold.
    pub max_decel: f64,
    /// s
    pub driver_reaction: f64,
    /// Dawdling factor in [0, 1].
    pub imperfection_sigma: f64,
    /// Bumper-to-bumper standstill distance, m.
    pub min_gap: f64,
    /// s_max, m/s
    pub max_speed: f64,
    /// m
    pub vehicle_length: f64,
}

impl Default for KraussParams {
    fn default() -> Self {
        Self {
            max_accel: 2.6,
            max_decel: 4.6,
            driver_reaction: 1.0,
            imperfection_sigma: 0.5,
            min_gap: 2.5,
            max_speed: 25.0,
            vehicle_length: 5.0,
        }
    }
}

impl KraussParams {
    pub fn validate(&self) -> Result<(), MobilityError> {
        let positive = [
            ("krauss.max_accel", self.max_accel),
            ("krauss.max_decel", self.max_decel),
            ("krauss.driver_reaction", self.driver_reaction),
            ("krauss.min_gap", self.min_gap),
            ("krauss.max_speed", self.max_speed),
            ("krauss.vehicle_length", self.vehicle_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(MobilityError::InvalidParam(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.imperfection_sigma) {
            return Err(MobilityError::InvalidParam(
                "krauss.imperfection_sigma must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Krauss safe speed for a follower at speed `v_follower` behind a leader at
/// `v_leader`, `gap` meters of usable space ahead (net of `min_gap`).
pub fn safe_speed(gap: f64, v_leader: f64, v_follower: f64, params: &KraussParams) -> f64 {
    let tau = params.driver_reaction;
    let b = params.max_decel;
    let v = v_leader + (gap - v_leader * tau) / ((v_leader + v_follower) / (2.0 * b) + tau);
    v.max(0.0)
}

fn forward(road: &RoadConfig, lane: u32, from: f64, to: f64) -> f64 {
    (to - from).rem_euclid(road.perimeter(lane))
}

/// Nearest vehicles ahead and behind `s` on `lane`:
/// `((center distance, speed) of leader, center distance of follower)`.
fn neighbors_on_lane(
    road: &RoadConfig,
    lane: u32,
    s: f64,
    me: VehicleId,
    others: &[VehicleState],
) -> (Option<(f64, f64)>, Option<f64>) {
    let mut ahead: Option<(f64, f64)> = None;
    let mut behind: Option<f64> = None;
    for o in others.iter().filter(|o| o.id != me && o.lane == lane) {
        let so = road.project(lane, o.x, o.y);
        let fwd = forward(road, lane, s, so);
        let back = forward(road, lane, so, s);
        if ahead.map_or(true, |(d, _)| fwd < d) {
            ahead = Some((fwd, o.speed));
        }
        if behind.map_or(true, |d| back < d) {
            behind = Some(back);
        }
    }
    (ahead, behind)
}

fn lane_safe_speed(leader: Option<(f64, f64)>, v: f64, params: &KraussParams) -> f64 {
    match leader {
        None => params.max_speed,
        Some((dist, v_l)) => {
            let gap = dist - params.vehicle_length - params.min_gap;
            safe_speed(gap, v_l, v, params).min(params.max_speed)
        }
    }
}

/// Lane selection: move to an adjacent lane only when it offers a strictly
/// higher safe speed and leaves at least `min_gap` to the new leader and the
/// new follower. Returns the current lane otherwise.
pub fn lane_change(
    vehicle: &VehicleState,
    neighbors: &[VehicleState],
    params: &KraussParams,
    road: &RoadConfig,
) -> u32 {
    let lane = vehicle.lane;
    let s = road.project(lane, vehicle.x, vehicle.y);
    let (leader, _) = neighbors_on_lane(road, lane, s, vehicle.id, neighbors);
    let current = lane_safe_speed(leader, vehicle.speed, params);

    let mut best = (lane, current);
    let targets = [lane.checked_sub(1), Some(lane + 1)];
    for target in targets.into_iter().flatten().filter(|&l| l < road.lanes) {
        let st = road.project(target, vehicle.x, vehicle.y);
        let (ahead, behind) = neighbors_on_lane(road, target, st, vehicle.id, neighbors);
        let front_ok = ahead.map_or(true, |(d, _)| d - params.vehicle_length >= params.min_gap);
        let rear_ok = behind.map_or(true, |d| d - params.vehicle_length >= params.min_gap);
        if !(front_ok && rear_ok) {
            continue;
        }
        let v = lane_safe_speed(ahead, vehicle.speed, params);
        if v > best.1 {
            best = (target, v);
        }
    }
    best.0
}

/// Smallest bumper-to-bumper gap between consecutive vehicles sharing a
/// lane, or `None` when no lane holds two vehicles.
pub fn min_same_lane_gap(
    states: &[VehicleState],
    road: &RoadConfig,
    params: &KraussParams,
) -> Option<f64> {
    let mut min: Option<f64> = None;
    for lane in 0..road.lanes {
        let mut s: Vec<f64> = states
            .iter()
            .filter(|v| v.lane == lane)
            .map(|v| road.project(lane, v.x, v.y))
            .collect();
        if s.len() < 2 {
            continue;
        }
        s.sort_by(f64::total_cmp);
        let p = road.perimeter(lane);
        for i in 0..s.len() {
            let next = if i + 1 < s.len() { s[i + 1] } else { s[0] + p };
            let gap = next - s[i] - params.vehicle_length;
            min = Some(min.map_or(gap, |m: f64| m.min(gap)));
        }
    }
    min
}

/// `(center distance, speed)` of each vehicle's leader on its own lane.
/// Two vehicles at the same arc length are a collision.
fn leaders(
    cur: &[VehicleState],
    road: &RoadConfig,
) -> Result<Vec<Option<(f64, f64)>>, MobilityError> {
    let mut lanes: Vec<Vec<(f64, usize)>> = vec![Vec::new(); road.lanes as usize];
    for (i, v) in cur.iter().enumerate() {
        lanes[v.lane as usize].push((road.project(v.lane, v.x, v.y), i));
    }
    let mut leader_of: Vec<Option<(f64, f64)>> = vec![None; cur.len()];
    for (lane, list) in lanes.iter_mut().enumerate() {
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
        let m = list.len();
        if m < 2 {
            continue;
        }
        let p = road.perimeter(lane as u32);
        for k in 0..m {
            let (s, i) = list[k];
            let (sl, il) = list[(k + 1) % m];
            let dist = (sl - s).rem_euclid(p);
            if dist <= 1e-9 || p - dist <= 1e-9 {
                return Err(MobilityError::Collision {
                    a: cur[i].id,
                    b: cur[il].id,
                    lane: lane as u32,
                });
            }
            leader_of[i] = Some((dist, cur[il].speed));
        }
    }
    Ok(leader_of)
}

/// One Krauss update of every vehicle: sequential lane changes (in input
/// order), then a parallel longitudinal update against the post-change
/// leaders.
pub fn krauss_step<R: Rng + ?Sized>(
    states: &[VehicleState],
    params: &KraussParams,
    road: &RoadConfig,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<VehicleState>, MobilityError> {
    if !(dt > 0.0) {
        return Err(MobilityError::InvalidParam("dt must be positive".into()));
    }
    let mut cur = states.to_vec();
    for v in &cur {
        if v.lane >= road.lanes {
            return Err(MobilityError::InvalidParam(format!(
                "vehicle {} on lane {} of a {}-lane road",
                v.id, v.lane, road.lanes
            )));
        }
    }

    leaders(&cur, road)?;
    for i in 0..cur.len() {
        let target = lane_change(&cur[i], &cur, params, road);
        if target != cur[i].lane {
            let s = road.project(target, cur[i].x, cur[i].y);
            let (x, y, heading) = road.point_at(target, s);
            let v = &mut cur[i];
            v.lane = target;
            v.x = x;
            v.y = y;
            v.heading = heading;
        }
    }

    let leader_of = leaders(&cur, road)?;

    let t_next = states.first().map_or(0.0, |v| v.t) + dt;
    let mut out = Vec::with_capacity(cur.len());
    for (i, v) in cur.iter().enumerate() {
        let v_safe = lane_safe_speed(leader_of[i], v.speed, params);
        let desired = (v.speed + params.max_accel * dt)
            .min(params.max_speed)
            .min(v_safe);
        let eta: f64 = rng.gen();
        let mut speed =
            (desired - params.imperfection_sigma * eta * params.max_accel * dt).max(0.0);
        if let Some((dist, _)) = leader_of[i] {
            // Never close more than the current bumper gap in one tick.
            speed = speed.min((dist - params.vehicle_length).max(0.0) / dt);
        }
        let s = road.project(v.lane, v.x, v.y) + speed * dt;
        let (x, y, heading) = road.point_at(v.lane, s);
        out.push(VehicleState {
            id: v.id,
            x,
            y,
            speed,
            heading,
            lane: v.lane,
            t: t_next,
        });
    }
    Ok(out)
}

/// Vehicles spread uniformly around the circuit, round-robin across lanes,
/// initial speed drawn from `Uniform[5, max_speed]`.
pub fn initial_placement<R: Rng + ?Sized>(
    n: usize,
    road: &RoadConfig,
    params: &KraussParams,
    rng: &mut R,
) -> Result<Vec<VehicleState>, MobilityError> {
    road.validate()?;
    params.validate()?;
    let lanes = road.lanes as usize;
    let per_lane = n.div_ceil(lanes).max(1);
    let tightest = road.perimeter(road.lanes - 1) / per_lane as f64;
    if tightest < params.vehicle_length + params.min_gap {
        return Err(MobilityError::InvalidParam(format!(
            "{n} vehicles do not fit on the circuit"
        )));
    }
    let lo = 5.0_f64.min(params.max_speed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lane = (i % lanes) as u32;
        let s = road.perimeter(lane) * i as f64 / n as f64;
        let (x, y, heading) = road.point_at(lane, s);
        let speed = rng.gen_range(lo..=params.max_speed);
        out.push(VehicleState {
            id: i as VehicleId,
            x,
            y,
            speed,
            heading,
            lane,
            t: 0.0,
        });
    }
    Ok(out)
}

/// Runs the builtin mobility model for `duration` seconds at tick `dt` and
/// returns every sample, including t = 0.
pub fn simulate_krauss<R: Rng + ?Sized>(
    n: usize,
    road: &RoadConfig,
    params: &KraussParams,
    duration: f64,
    dt: f64,
    rng: &mut R,
) -> Result<TrajectoryTable, MobilityError> {
    let mut states = initial_placement(n, road, params, rng)?;
    let ticks = (duration / dt - 1e-9).ceil().max(0.0) as usize;
    let mut tracks: Vec<Vec<VehicleState>> = states.iter().map(|s| vec![*s]).collect();
    for k in 1..=ticks {
        states = krauss_step(&states, params, road, dt, rng)?;
        for (track, s) in tracks.iter_mut().zip(states.iter_mut()) {
            // Avoid drift from repeated addition.
            s.t = k as f64 * dt;
            track.push(*s);
        }
    }
    TrajectoryTable::from_tracks(dt, tracks)
}
