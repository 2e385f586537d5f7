use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use super::MobilityError;

/// Closed rectangular circuit. Lane 0 is the outermost loop; every lane is
/// a rectangle inset by half a lane width more than the previous one and is
/// driven counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadConfig {
    pub length: f64,
    pub width: f64,
    pub lanes: u32,
    pub lane_width: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            length: 1000.0,
            width: 100.0,
            lanes: 3,
            lane_width: 4.0,
        }
    }
}

const HEADINGS: [f64; 4] = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];

impl RoadConfig {
    pub fn validate(&self) -> Result<(), MobilityError> {
        if self.lanes < 1 {
            return Err(MobilityError::InvalidParam("road.lanes must be >= 1".into()));
        }
        if !(self.lane_width > 0.0) || !(self.length > 0.0) || !(self.width > 0.0) {
            return Err(MobilityError::InvalidParam(
                "road dimensions must be positive".into(),
            ));
        }
        if self.lane_width * self.lanes as f64 > self.width {
            return Err(MobilityError::InvalidParam(
                "road.lane_width * road.lanes exceeds road.width".into(),
            ));
        }
        Ok(())
    }

    fn inset(&self, lane: u32) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    /// Side lengths (along x, along y) of a lane loop.
    fn sides(&self, lane: u32) -> (f64, f64) {
        let a = self.inset(lane);
        (self.length - 2.0 * a, self.width - 2.0 * a)
    }

    pub fn perimeter(&self, lane: u32) -> f64 {
        let (lx, ly) = self.sides(lane);
        2.0 * (lx + ly)
    }

    /// Point and heading at arc length `s` along a lane loop.
    pub fn point_at(&self, lane: u32, s: f64) -> (f64, f64, f64) {
        let a = self.inset(lane);
        let (lx, ly) = self.sides(lane);
        let p = 2.0 * (lx + ly);
        let s = s.rem_euclid(p);
        if s < lx {
            (a + s, a, HEADINGS[0])
        } else if s < lx + ly {
            (a + lx, a + (s - lx), HEADINGS[1])
        } else if s < 2.0 * lx + ly {
            (a + lx - (s - lx - ly), a + ly, HEADINGS[2])
        } else {
            (a, a + ly - (s - 2.0 * lx - ly), HEADINGS[3])
        }
    }

    /// Arc length of the point on a lane loop closest to `(x, y)`.
    pub fn project(&self, lane: u32, x: f64, y: f64) -> f64 {
        let a = self.inset(lane);
        let (lx, ly) = self.sides(lane);
        let (x0, x1, y0, y1) = (a, a + lx, a, a + ly);
        let candidates = [
            // bottom, right, top, left
            ((x - x0).clamp(0.0, lx), (y - y0).abs(), 0.0),
            ((y - y0).clamp(0.0, ly), (x - x1).abs(), lx),
            ((x1 - x).clamp(0.0, lx), (y - y1).abs(), lx + ly),
            ((y1 - y).clamp(0.0, ly), (x - x0).abs(), 2.0 * lx + ly),
        ];
        let mut best = (f64::INFINITY, 0.0);
        for (i, &(along, _, offset)) in candidates.iter().enumerate() {
            let (px, py) = match i {
                0 => (x0 + along, y0),
                1 => (x1, y0 + along),
                2 => (x1 - along, y1),
                _ => (x0, y1 - along),
            };
            let d = (px - x).hypot(py - y);
            if d < best.0 - 1e-12 {
                best = (d, offset + along);
            }
        }
        best.1.rem_euclid(self.perimeter(lane))
    }

    /// Whether `(x, y)` lies on the centerline of `lane` within `tol` meters.
    pub fn on_lane(&self, lane: u32, x: f64, y: f64, tol: f64) -> bool {
        if lane >= self.lanes {
            return false;
        }
        let s = self.project(lane, x, y);
        let (px, py, _) = self.point_at(lane, s);
        (px - x).hypot(py - y) <= tol
    }
}
