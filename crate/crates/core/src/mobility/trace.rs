use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use super::{MobilityError, VehicleState};
use crate::VehicleId;

const TICK_TOL: f64 = 1e-6;
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
struct Track {
    id: VehicleId,
    start: f64,
    samples: Vec<VehicleState>,
}

/// Per-vehicle, time-ordered samples at a uniform tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    tick: f64,
    tracks: Vec<Track>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t: f64,
    vehicle_id: VehicleId,
    x: f64,
    y: f64,
    speed: f64,
    heading: f64,
    lane: u32,
}

impl TrajectoryTable {
    /// Builds a table from per-vehicle sample lists. Each list must be
    /// strictly increasing in time with spacing `tick`.
    pub fn from_tracks(tick: f64, tracks: Vec<Vec<VehicleState>>) -> Result<Self, MobilityError> {
        if !(tick > 0.0) {
            return Err(MobilityError::Format("tick must be positive".into()));
        }
        let mut out = Vec::with_capacity(tracks.len());
        for samples in tracks {
            let Some(first) = samples.first() else { continue };
            let id = first.id;
            for w in samples.windows(2) {
                if w[1].id != id {
                    return Err(MobilityError::Format(format!(
                        "track of vehicle {id} contains vehicle {}",
                        w[1].id
                    )));
                }
                let d = w[1].t - w[0].t;
                if d <= 0.0 {
                    return Err(MobilityError::Format(format!(
                        "vehicle {id}: duplicate or decreasing time at t={}",
                        w[1].t
                    )));
                }
                if (d - tick).abs() > TICK_TOL {
                    return Err(MobilityError::Format(format!(
                        "vehicle {id}: non-uniform tick {d} at t={} (expected {tick})",
                        w[1].t
                    )));
                }
            }
            out.push(Track { id, start: first.t, samples });
        }
        out.sort_by_key(|t| t.id);
        for w in out.windows(2) {
            if w[0].id == w[1].id {
                return Err(MobilityError::Format(format!("vehicle {} appears twice", w[0].id)));
            }
        }
        Ok(Self { tick, tracks: out })
    }

    pub fn tick(&self) -> f64 {
        self.tick
    }

    pub fn vehicle_count(&self) -> usize {
        self.tracks.len()
    }

    /// Vehicle ids in ascending order; the position in this list is the
    /// vehicle's dense index.
    pub fn vehicle_ids(&self) -> Vec<VehicleId> {
        self.tracks.iter().map(|t| t.id).collect()
    }

    pub fn index_of(&self, id: VehicleId) -> Option<usize> {
        self.tracks.binary_search_by_key(&id, |t| t.id).ok()
    }

    pub fn samples(&self, id: VehicleId) -> Option<&[VehicleState]> {
        self.index_of(id).map(|i| self.tracks[i].samples.as_slice())
    }

    /// `(first, last)` sample time of a vehicle.
    pub fn span(&self, id: VehicleId) -> Option<(f64, f64)> {
        self.index_of(id).map(|i| self.span_idx(i))
    }

    pub fn span_idx(&self, idx: usize) -> (f64, f64) {
        let tr = &self.tracks[idx];
        (tr.start, tr.samples.last().map_or(tr.start, |s| s.t))
    }

    /// Largest number of samples any vehicle has.
    pub fn sample_count(&self) -> usize {
        self.tracks.iter().map(|t| t.samples.len()).max().unwrap_or(0)
    }

    /// The `k`-th sample of every vehicle that has one.
    pub fn states_at_index(&self, k: usize) -> Vec<VehicleState> {
        self.tracks.iter().filter_map(|t| t.samples.get(k).copied()).collect()
    }

    /// Ground truth for a vehicle at time `t`: exact at sample instants,
    /// linear in position and speed between them, heading and lane held
    /// from the earlier sample.
    pub fn position_at(&self, id: VehicleId, t: f64) -> Result<VehicleState, MobilityError> {
        let idx = self.index_of(id).ok_or(MobilityError::UnknownVehicle(id))?;
        self.state_at_idx(idx, t)
    }

    pub fn state_at_idx(&self, idx: usize, t: f64) -> Result<VehicleState, MobilityError> {
        let tr = &self.tracks[idx];
        let (start, end) = self.span_idx(idx);
        let out_of_range = || MobilityError::OutOfRange { id: tr.id, t, start, end };
        if t < start - SNAP || t > end + SNAP {
            return Err(out_of_range());
        }
        let k = ((t - start) / self.tick).max(0.0);
        let base = k.floor();
        let frac = k - base;
        let i = base as usize;
        if frac < SNAP || i + 1 >= tr.samples.len() {
            let mut s = *tr.samples.get(i).ok_or_else(out_of_range)?;
            s.t = t;
            return Ok(s);
        }
        if frac > 1.0 - SNAP {
            let mut s = tr.samples[i + 1];
            s.t = t;
            return Ok(s);
        }
        let a = &tr.samples[i];
        let b = &tr.samples[i + 1];
        Ok(VehicleState {
            id: a.id,
            x: a.x + (b.x - a.x) * frac,
            y: a.y + (b.y - a.y) * frac,
            speed: a.speed + (b.speed - a.speed) * frac,
            heading: a.heading,
            lane: a.lane,
            t,
        })
    }
}

/// Reads a trajectory CSV (`t,vehicle_id,x,y,speed,heading,lane`).
/// Rows may appear in any order; each vehicle's samples are sorted by time
/// and must be uniformly spaced.
pub fn load_trace(path: impl AsRef<Path>) -> Result<TrajectoryTable, MobilityError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref()).map_err(
        |e| match e.into_kind() {
            csv::ErrorKind::Io(io) => MobilityError::Io(io),
            other => MobilityError::Format(format!("{other:?}")),
        },
    )?;
    let headers = rdr
        .headers()
        .map_err(|e| MobilityError::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let expected = ["t", "vehicle_id", "x", "y", "speed", "heading", "lane"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(MobilityError::Parse {
            line: 1,
            msg: format!("expected header {}", expected.join(",")),
        });
    }

    let mut rows: Vec<VehicleState> = Vec::new();
    for rec in rdr.deserialize::<TraceRow>() {
        let row = rec.map_err(|e| MobilityError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rows.len() as u64 + 2;
        let finite = [row.t, row.x, row.y, row.speed, row.heading];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(MobilityError::Parse { line, msg: "non-finite value".into() });
        }
        if row.speed < 0.0 {
            return Err(MobilityError::Parse { line, msg: "negative speed".into() });
        }
        rows.push(VehicleState {
            id: row.vehicle_id,
            x: row.x,
            y: row.y,
            speed: row.speed,
            heading: row.heading,
            lane: row.lane,
            t: row.t,
        });
    }
    // Stable: rows with equal (id, t) keep file order, and are then rejected
    // as duplicates by `from_tracks`.
    rows.sort_by(|a, b| a.id.cmp(&b.id).then(a.t.total_cmp(&b.t)));

    let mut tracks: Vec<Vec<VehicleState>> = Vec::new();
    for r in rows {
        match tracks.last_mut() {
            Some(tr) if tr[0].id == r.id => tr.push(r),
            _ => tracks.push(vec![r]),
        }
    }
    let tick = tracks
        .iter()
        .find(|tr| tr.len() >= 2)
        .map(|tr| ((tr[1].t - tr[0].t) / TICK_TOL).round() * TICK_TOL)
        .unwrap_or(super::MOBILITY_TICK);
    TrajectoryTable::from_tracks(tick, tracks)
}

/// Writes a table in the trace CSV schema, rows ordered by time then id.
pub fn write_trace(table: &TrajectoryTable, path: impl AsRef<Path>) -> Result<(), MobilityError> {
    let mut rows: Vec<&VehicleState> = table.tracks.iter().flat_map(|t| t.samples.iter()).collect();
    rows.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,vehicle_id,x,y,speed,heading,lane")?;
    for r in rows {
        writeln!(
            out,
            "{:.3},{},{},{},{},{},{}",
            r.t, r.id, r.x, r.y, r.speed, r.heading, r.lane
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "t,vehicle_id,x,y,speed,heading,lane\n";

    #[test]
    fn two_rows_one_vehicle() {
        let f = write(&format!("{HEADER}0.000,7,0,0,10,0,1\n0.100,7,1,0,10,0,1\n"));
        let table = load_trace(f.path()).unwrap();
        assert_eq!(table.vehicle_ids(), vec![7]);
        assert_eq!(table.samples(7).unwrap().len(), 2);
        assert!((table.tick() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn out_of_order_rows_are_sorted() {
        let f = write(&format!(
            "{HEADER}0.200,1,2,0,10,0,0\n0.000,2,5,0,1,0,1\n0.000,1,0,0,10,0,0\n0.100,2,5.1,0,1,0,1\n0.100,1,1,0,10,0,0\n"
        ));
        let table = load_trace(f.path()).unwrap();
        let xs: Vec<f64> = table.samples(1).unwrap().iter().map(|s| s.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0]);
        assert_eq!(table.samples(2).unwrap().len(), 2);
    }

    #[test]
    fn negative_lane_is_a_parse_error() {
        let f = write(&format!("{HEADER}0.000,1,0,0,10,0,0\n0.100,1,1,0,10,0,-1\n"));
        match load_trace(f.path()) {
            Err(MobilityError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_uniform_tick_is_rejected() {
        let f = write(&format!("{HEADER}0.000,1,0,0,1,0,0\n0.100,1,0,0,1,0,0\n0.300,1,0,0,1,0,0\n"));
        assert!(matches!(load_trace(f.path()), Err(MobilityError::Format(_))));
    }

    #[test]
    fn wrong_header_is_rejected() {
        let f = write("time,id,x,y\n0,1,0,0\n");
        assert!(matches!(load_trace(f.path()), Err(MobilityError::Parse { line: 1, .. })));
    }

    fn line_table() -> TrajectoryTable {
        let s = |t: f64, x: f64| VehicleState { id: 3, x, y: 0.0, speed: 10.0, heading: 0.0, lane: 0, t };
        TrajectoryTable::from_tracks(1.0, vec![vec![s(0.0, 0.0), s(1.0, 10.0)]]).unwrap()
    }

    #[test]
    fn position_at_sample_midpoint_and_outside() {
        let table = line_table();
        assert_eq!(table.position_at(3, 1.0).unwrap().x, 10.0);
        assert_eq!(table.position_at(3, 0.5).unwrap().x, 5.0);
        assert!(matches!(table.position_at(3, 1.5), Err(MobilityError::OutOfRange { .. })));
        assert!(matches!(table.position_at(4, 0.5), Err(MobilityError::UnknownVehicle(4))));
    }

    #[test]
    fn write_then_load_round_trips() {
        let table = line_table();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_trace(&table, f.path()).unwrap();
        assert_eq!(load_trace(f.path()).unwrap(), table);
    }
}
