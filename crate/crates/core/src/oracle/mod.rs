//! Exact slotted replay and exhaustive schedule search on toy instances.
//!
//! Time is measured in whole slots `1..=K`. Every receiver starts out
//! holding a zero-speed snapshot of every sender taken at slot 0; the channel
//! delivers every frame to every other vehicle instantly. Tracking error is
//! read at each slot before that slot's frames arrive and age right after,
//! which is the convention of the two-vehicle tables this module reproduces.
//!
//! Motions are polynomials with rational coefficients, so positions, ages
//! and squared errors are exact. Tracking errors are square roots and are
//! exact whenever the squared error is a perfect rational square.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use std::cmp::Ordering;
use thiserror::Error;

pub type Q = Ratio<i64>;

pub const MAX_VEHICLES: usize = 3;
pub const MAX_SLOTS: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for enumeration: {vehicles} vehicles, {slots} slots (limits {MAX_VEHICLES}, {MAX_SLOTS})")]
    Bounds { vehicles: usize, slots: usize },
    #[error("capacity must be at least 1")]
    Capacity,
    #[error("slot {slot} carries {count} frames, capacity {capacity}")]
    CapacityViolation { slot: usize, count: usize, capacity: usize },
    #[error("assignment covers {got} slots, problem has {want}")]
    Length { got: usize, want: usize },
    #[error("slot {slot} names unknown or repeated vehicle {vehicle}")]
    BadVehicle { slot: usize, vehicle: usize },
    #[error("no schedule satisfies the transmission-count bounds")]
    Infeasible,
}

fn q(n: i64) -> Q {
    Q::from_integer(n)
}

/// Polynomial in t, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<Q>);

impl Poly {
    pub fn constant(c: i64) -> Self {
        Poly(vec![q(c)])
    }

    pub fn eval(&self, t: Q) -> Q {
        self.0.iter().rev().fold(Q::zero(), |acc, c| acc * t + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * q(i as i64))
                .collect(),
        )
    }
}

/// Closed-form planar motion of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub x: Poly,
    pub y: Poly,
}

impl Motion {
    pub fn position(&self, t: Q) -> (Q, Q) {
        (self.x.eval(t), self.y.eval(t))
    }

    pub fn velocity(&self, t: Q) -> (Q, Q) {
        (self.x.derivative().eval(t), self.y.derivative().eval(t))
    }

    pub fn stationary(x: i64, y: i64) -> Self {
        Motion { x: Poly::constant(x), y: Poly::constant(y) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    SystemAoi,
    SystemTaoi,
    SumTe,
}

impl std::str::FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "system_aoi" => Ok(Objective::SystemAoi),
            "system_taoi" => Ok(Objective::SystemTaoi),
            "sum_te" => Ok(Objective::SumTe),
            other => Err(format!("unknown objective {other:?} (expected system_aoi, system_taoi or sum_te)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleProblem {
    pub vehicles: Vec<Motion>,
    pub slots: usize,
    pub capacity: usize,
    pub objective: Objective,
    /// Self tracking error threshold for the riskiness gate.
    pub tau_th: Q,
    /// Per-vehicle lower bound on transmissions over the window.
    pub min_tx: usize,
    /// Per-vehicle upper bound on transmissions over the window.
    pub max_tx: Option<usize>,
}

impl ScheduleProblem {
    pub fn new(vehicles: Vec<Motion>, slots: usize, objective: Objective) -> Self {
        Self {
            vehicles,
            slots,
            capacity: 1,
            objective,
            tau_th: Q::new(1, 2),
            min_tx: 0,
            max_tx: None,
        }
    }

    /// Two vehicles on one axis, `y_u = 2t` and `y_v = t^2`.
    pub fn toy(slots: usize, objective: Objective) -> Self {
        let u = Motion { x: Poly::constant(0), y: Poly(vec![q(0), q(2)]) };
        let v = Motion { x: Poly::constant(0), y: Poly(vec![q(0), q(0), q(1)]) };
        Self::new(vec![u, v], slots, objective)
    }

    fn check_bounds(&self) -> Result<(), OracleError> {
        if self.vehicles.len() > MAX_VEHICLES || self.slots > MAX_SLOTS {
            return Err(OracleError::Bounds { vehicles: self.vehicles.len(), slots: self.slots });
        }
        if self.capacity < 1 {
            return Err(OracleError::Capacity);
        }
        Ok(())
    }

    /// Squared error at slot `k` of an estimate built from the snapshot
    /// taken at slot `s` (slot 0 is the zero-speed prior).
    fn te_sq(&self, u: usize, s: usize, k: usize) -> Q {
        let m = &self.vehicles[u];
        let (px, py) = m.position(q(s as i64));
        let (vx, vy) = if s == 0 { (Q::zero(), Q::zero()) } else { m.velocity(q(s as i64)) };
        let dt = q((k - s) as i64);
        let (tx, ty) = m.position(q(k as i64));
        let (ex, ey) = (tx - (px + vx * dt), ty - (py + vy * dt));
        ex * ex + ey * ey
    }

    fn estimate(&self, u: usize, s: usize, k: usize) -> (Q, Q) {
        let m = &self.vehicles[u];
        let (px, py) = m.position(q(s as i64));
        let (vx, vy) = if s == 0 { (Q::zero(), Q::zero()) } else { m.velocity(q(s as i64)) };
        let dt = q((k - s) as i64);
        (px + vx * dt, py + vy * dt)
    }

    /// Riskiness of `u` at slot `k`: its own one-slot extrapolation error
    /// reaches the threshold.
    fn risky(&self, u: usize, k: usize) -> bool {
        let m = &self.vehicles[u];
        let (px, py) = m.position(q(k as i64 - 1));
        let (vx, vy) = m.velocity(q(k as i64 - 1));
        let (tx, ty) = m.position(q(k as i64));
        let (ex, ey) = (tx - px - vx, ty - py - vy);
        ex * ex + ey * ey >= self.tau_th * self.tau_th
    }
}

fn ratio_isqrt(r: Q) -> Option<Q> {
    fn isqrt(n: i64) -> Option<i64> {
        if n < 0 {
            return None;
        }
        let s = (n as f64).sqrt().round() as i64;
        (s.max(0)..=s + 1).chain((s - 1).max(0)..s).find(|c| c * c == n)
    }
    Some(Q::new(isqrt(*r.numer())?, isqrt(*r.denom())?))
}

fn to_f64(r: Q) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// One ordered pair at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCell {
    pub sender: usize,
    pub receiver: usize,
    /// After this slot's receptions.
    pub aoi: Q,
    pub taoi: Q,
    /// Before this slot's receptions.
    pub estimate: (Q, Q),
    pub te_sq: Q,
    /// Present when the error is a rational number.
    pub te_exact: Option<Q>,
    pub te: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRow {
    pub slot: usize,
    pub transmitters: Vec<usize>,
    pub positions: Vec<(Q, Q)>,
    pub pairs: Vec<PairCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTables {
    pub rows: Vec<SlotRow>,
    /// `(sender, receiver, mean age)`.
    pub pair_aoi: Vec<(usize, usize, Q)>,
    pub pair_taoi: Vec<(usize, usize, Q)>,
    /// `(sender, receiver, mean tracking error)`.
    pub pair_te: Vec<(usize, usize, f64)>,
    pub system_aoi: Q,
    pub system_taoi: Q,
    pub sum_te: f64,
}

impl ReplayTables {
    pub fn pair_aoi(&self, sender: usize, receiver: usize) -> Option<Q> {
        self.pair_aoi.iter().find(|p| p.0 == sender && p.1 == receiver).map(|p| p.2)
    }

    pub fn pair_te(&self, sender: usize, receiver: usize) -> Option<f64> {
        self.pair_te.iter().find(|p| p.0 == sender && p.1 == receiver).map(|p| p.2)
    }

    /// Exact mean tracking error of a pair when every sample is rational.
    pub fn pair_te_exact(&self, sender: usize, receiver: usize) -> Option<Q> {
        let mut sum = Q::zero();
        for row in &self.rows {
            let cell = row.pairs.iter().find(|c| c.sender == sender && c.receiver == receiver)?;
            sum += cell.te_exact?;
        }
        Some(sum / q(self.rows.len() as i64))
    }

    /// The per-slot table as `label, t1..tK` rows: for every ordered pair
    /// the age, the sender coordinates, the receiver's estimate and the
    /// tracking error. Vehicles are named u, v, w; x rows are left out when
    /// every x is zero.
    pub fn layout(&self) -> Vec<(String, Vec<String>)> {
        const NAMES: [&str; MAX_VEHICLES] = ["u", "v", "w"];
        let Some(first) = self.rows.first() else { return Vec::new() };
        let n = first.positions.len();
        let with_x = self.rows.iter().any(|r| {
            r.positions.iter().any(|p| !p.0.is_zero()) || r.pairs.iter().any(|c| !c.estimate.0.is_zero())
        });
        let fmt = |r: Q| {
            if r.is_integer() {
                r.to_integer().to_string()
            } else {
                format!("{}/{}", r.numer(), r.denom())
            }
        };
        let mut out = Vec::new();
        for s in 0..n {
            for r in (0..n).filter(|&r| r != s) {
                let pair = format!("{}{}", NAMES[s], NAMES[r]);
                let cell = |row: &SlotRow| {
                    row.pairs.iter().find(|c| c.sender == s && c.receiver == r).cloned().expect("all pairs present")
                };
                out.push((format!("AoI_{pair}"), self.rows.iter().map(|row| fmt(cell(row).aoi)).collect()));
                if with_x {
                    out.push((format!("x_{}", NAMES[s]), self.rows.iter().map(|row| fmt(row.positions[s].0)).collect()));
                }
                out.push((format!("y_{}", NAMES[s]), self.rows.iter().map(|row| fmt(row.positions[s].1)).collect()));
                if with_x {
                    out.push((format!("xhat_{pair}"), self.rows.iter().map(|row| fmt(cell(row).estimate.0)).collect()));
                }
                out.push((format!("yhat_{pair}"), self.rows.iter().map(|row| fmt(cell(row).estimate.1)).collect()));
                out.push((
                    format!("te_{pair}"),
                    self.rows
                        .iter()
                        .map(|row| {
                            let c = cell(row);
                            c.te_exact.map_or_else(|| format!("{:.6}", c.te), fmt)
                        })
                        .collect(),
                ));
            }
        }
        out
    }
}

fn validate_assignment(problem: &ScheduleProblem, assignment: &[Vec<usize>]) -> Result<(), OracleError> {
    if assignment.len() != problem.slots {
        return Err(OracleError::Length { got: assignment.len(), want: problem.slots });
    }
    for (i, slot) in assignment.iter().enumerate() {
        if slot.len() > problem.capacity {
            return Err(OracleError::CapacityViolation {
                slot: i + 1,
                count: slot.len(),
                capacity: problem.capacity,
            });
        }
        for (j, &v) in slot.iter().enumerate() {
            if v >= problem.vehicles.len() || slot[..j].contains(&v) {
                return Err(OracleError::BadVehicle { slot: i + 1, vehicle: v });
            }
        }
    }
    Ok(())
}

/// Replays a schedule (`assignment[k - 1]` transmits in slot `k`).
pub fn replay_schedule(problem: &ScheduleProblem, assignment: &[Vec<usize>]) -> Result<ReplayTables, OracleError> {
    validate_assignment(problem, assignment)?;
    let n = problem.vehicles.len();
    let k_max = problem.slots;
    let mut last = vec![0usize; n];
    let mut rows = Vec::with_capacity(k_max);
    let mut aoi_sum = vec![Q::zero(); n * n];
    let mut taoi_sum = vec![Q::zero(); n * n];
    let mut te_sum = vec![0.0f64; n * n];
    for k in 1..=k_max {
        let before = last.clone();
        for &u in &assignment[k - 1] {
            last[u] = k;
        }
        let mut pairs = Vec::new();
        for s in 0..n {
            let te_sq = problem.te_sq(s, before[s], k);
            let te_exact = ratio_isqrt(te_sq);
            let te = te_exact.map_or_else(|| to_f64(te_sq).sqrt(), to_f64);
            let aoi = q((k - last[s]) as i64);
            let taoi = if problem.risky(s, k) { aoi } else { Q::zero() };
            for r in (0..n).filter(|&r| r != s) {
                aoi_sum[s * n + r] += aoi;
                taoi_sum[s * n + r] += taoi;
                te_sum[s * n + r] += te;
                pairs.push(PairCell {
                    sender: s,
                    receiver: r,
                    aoi,
                    taoi,
                    estimate: problem.estimate(s, before[s], k),
                    te_sq,
                    te_exact,
                    te,
                });
            }
        }
        rows.push(SlotRow {
            slot: k,
            transmitters: assignment[k - 1].clone(),
            positions: problem.vehicles.iter().map(|m| m.position(q(k as i64))).collect(),
            pairs,
        });
    }
    let kq = q(k_max.max(1) as i64);
    let mut pair_aoi = Vec::new();
    let mut pair_taoi = Vec::new();
    let mut pair_te = Vec::new();
    for s in 0..n {
        for r in (0..n).filter(|&r| r != s) {
            pair_aoi.push((s, r, aoi_sum[s * n + r] / kq));
            pair_taoi.push((s, r, taoi_sum[s * n + r] / kq));
            pair_te.push((s, r, te_sum[s * n + r] / k_max.max(1) as f64));
        }
    }
    let pairs = q((n * n.saturating_sub(1)).max(1) as i64);
    let system_aoi = pair_aoi.iter().fold(Q::zero(), |a, p| a + p.2) / pairs;
    let system_taoi = pair_taoi.iter().fold(Q::zero(), |a, p| a + p.2) / pairs;
    let sum_te = te_sum.iter().sum();
    Ok(ReplayTables { rows, pair_aoi, pair_taoi, pair_te, system_aoi, system_taoi, sum_te })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSolution {
    pub assignment: Vec<Vec<usize>>,
    /// Objective in floating point; `exact` carries the rational value for
    /// the age objectives.
    pub value: f64,
    pub exact: Option<Q>,
    pub tables: ReplayTables,
    /// Complete schedules scored (pruned subtrees excluded).
    pub evaluated: u64,
}

/// Transmitter sets allowed in one slot, in search order: non-empty sets
/// lexicographically, then the empty set.
fn slot_options(n: usize, capacity: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|&i| mask & (1 << i) != 0).collect::<Vec<_>>())
        .filter(|s| s.len() <= capacity)
        .collect();
    out.sort();
    out.push(Vec::new());
    out
}

#[derive(Clone, Copy, Debug)]
enum Cost {
    Exact(Q),
    Approx(f64),
}

const TE_TIE: f64 = 1e-9;

impl Cost {
    fn add(self, other: Cost) -> Cost {
        match (self, other) {
            (Cost::Exact(a), Cost::Exact(b)) => Cost::Exact(a + b),
            (Cost::Approx(a), Cost::Approx(b)) => Cost::Approx(a + b),
            _ => unreachable!("one objective per search"),
        }
    }

    fn cmp(self, other: Cost) -> Ordering {
        match (self, other) {
            (Cost::Exact(a), Cost::Exact(b)) => a.cmp(&b),
            (Cost::Approx(a), Cost::Approx(b)) if (a - b).abs() <= TE_TIE => Ordering::Equal,
            (Cost::Approx(a), Cost::Approx(b)) => a.total_cmp(&b),
            _ => unreachable!("one objective per search"),
        }
    }
}

struct Search<'a> {
    p: &'a ScheduleProblem,
    n: usize,
    options: Vec<Vec<usize>>,
    /// `te[(u * (K + 1) + s) * (K + 1) + k]`
    te: Vec<f64>,
    risky: Vec<bool>,
    best: Option<(Cost, Vec<usize>)>,
    path: Vec<usize>,
    evaluated: u64,
}

impl Search<'_> {
    fn slot_cost(&self, before: &[usize], after: &[usize], k: usize) -> Cost {
        let k1 = self.p.slots + 1;
        let receivers = (self.n - 1) as i64;
        match self.p.objective {
            Objective::SystemAoi | Objective::SystemTaoi => {
                let gated = self.p.objective == Objective::SystemTaoi;
                let mut sum = 0i64;
                for u in 0..self.n {
                    if !gated || self.risky[u * k1 + k] {
                        sum += (k - after[u]) as i64;
                    }
                }
                Cost::Exact(q(sum * receivers))
            }
            Objective::SumTe => {
                let mut sum = 0.0;
                for u in 0..self.n {
                    sum += self.te[(u * k1 + before[u]) * k1 + k];
                }
                Cost::Approx(sum * receivers as f64)
            }
        }
    }

    fn zero(&self) -> Cost {
        match self.p.objective {
            Objective::SumTe => Cost::Approx(0.0),
            _ => Cost::Exact(Q::zero()),
        }
    }

    fn dfs(&mut self, k: usize, last: &mut Vec<usize>, counts: &mut Vec<usize>, acc: Cost) {
        if let Some((best, _)) = &self.best {
            if acc.cmp(*best) != Ordering::Less {
                return;
            }
        }
        if k > self.p.slots {
            self.evaluated += 1;
            if counts.iter().all(|&c| c >= self.p.min_tx) {
                self.best = Some((acc, self.path.clone()));
            }
            return;
        }
        let remaining = self.p.slots - k + 1;
        if counts.iter().any(|&c| c + remaining < self.p.min_tx) {
            return;
        }
        for oi in 0..self.options.len() {
            let set = self.options[oi].clone();
            if let Some(max) = self.p.max_tx {
                if set.iter().any(|&u| counts[u] >= max) {
                    continue;
                }
            }
            let before = last.clone();
            for &u in &set {
                last[u] = k;
                counts[u] += 1;
            }
            let cost = acc.add(self.slot_cost(&before, last, k));
            self.path.push(oi);
            self.dfs(k + 1, last, counts, cost);
            self.path.pop();
            for &u in &set {
                counts[u] -= 1;
            }
            last.copy_from_slice(&before);
        }
    }
}

/// Exhaustive search for the minimum-objective schedule. Among equal
/// objectives the lexicographically first assignment wins, comparing slot
/// by slot in [`slot_options`] order.
pub fn enumerate_optimal(problem: &ScheduleProblem) -> Result<ScheduleSolution, OracleError> {
    problem.check_bounds()?;
    let n = problem.vehicles.len();
    let k1 = problem.slots + 1;
    let mut te = vec![0.0; n * k1 * k1];
    let mut risky = vec![false; n * k1];
    for u in 0..n {
        for k in 1..k1 {
            risky[u * k1 + k] = problem.risky(u, k);
            for s in 0..k {
                let sq = problem.te_sq(u, s, k);
                te[(u * k1 + s) * k1 + k] = ratio_isqrt(sq).map_or_else(|| to_f64(sq).sqrt(), to_f64);
            }
        }
    }
    let mut search = Search {
        p: problem,
        n,
        options: slot_options(n, problem.capacity),
        te,
        risky,
        best: None,
        path: Vec::new(),
        evaluated: 0,
    };
    let zero = search.zero();
    search.dfs(1, &mut vec![0; n], &mut vec![0; n], zero);
    let (_, path) = search.best.clone().ok_or(OracleError::Infeasible)?;
    let assignment: Vec<Vec<usize>> = path.iter().map(|&i| search.options[i].clone()).collect();
    let tables = replay_schedule(problem, &assignment)?;
    let (value, exact) = match problem.objective {
        Objective::SystemAoi => (to_f64(tables.system_aoi), Some(tables.system_aoi)),
        Objective::SystemTaoi => (to_f64(tables.system_taoi), Some(tables.system_taoi)),
        Objective::SumTe => (tables.sum_te, None),
    };
    Ok(ScheduleSolution { assignment, value, exact, tables, evaluated: search.evaluated })
}

/// Exact value of an objective for a replayed schedule, as f64.
pub fn objective_value(tables: &ReplayTables, objective: Objective) -> f64 {
    match objective {
        Objective::SystemAoi => to_f64(tables.system_aoi),
        Objective::SystemTaoi => to_f64(tables.system_taoi),
        Objective::SumTe => tables.sum_te,
    }
}

impl ScheduleProblem {
    /// Sampled trajectories of the motions at integer slot times `0..=slots`,
    /// for driving the simulator's slotted mode.
    pub fn trajectories(&self) -> Result<crate::mobility::TrajectoryTable, crate::mobility::MobilityError> {
        let tracks = self
            .vehicles
            .iter()
            .enumerate()
            .map(|(id, m)| {
                (0..=self.slots)
                    .map(|k| {
                        let t = q(k as i64);
                        let (x, y) = m.position(t);
                        let (vx, vy) = m.velocity(t);
                        let (vx, vy) = (to_f64(vx), to_f64(vy));
                        crate::mobility::VehicleState {
                            id: id as crate::VehicleId,
                            x: to_f64(x),
                            y: to_f64(y),
                            speed: vx.hypot(vy),
                            heading: if vx == 0.0 && vy == 0.0 { 0.0 } else { vy.atan2(vx) },
                            lane: 0,
                            t: k as f64,
                        }
                    })
                    .collect()
            })
            .collect();
        crate::mobility::TrajectoryTable::from_tracks(1.0, tracks)
    }
}
