use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{ScenarioConfig, Waypoint};
use super::SimError;
use crate::geometry::Point2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub ts_us: u64,
    pub pos: Point2,
}

/// Ground-truth positions at every capture instant.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthTrack {
    pub samples: Vec<TruthSample>,
    pub grid_pitch_m: f64,
    pub room: (f64, f64),
}

/// Center of the grid cell containing `p`.
pub fn cell_center(p: Point2, pitch: f64, room: (f64, f64)) -> Point2 {
    let snap = |v: f64, extent: f64| {
        let cells = (extent / pitch).ceil().max(1.0) as i64;
        let idx = ((v / pitch).floor() as i64).clamp(0, cells - 1);
        (idx as f64 + 0.5) * pitch
    };
    Point2::new(snap(p.x, room.0), snap(p.y, room.1))
}

impl GroundTruthTrack {
    pub fn cell_snapped(&self) -> Vec<TruthSample> {
        self.samples
            .iter()
            .map(|s| TruthSample {
                ts_us: s.ts_us,
                pos: cell_center(s.pos, self.grid_pitch_m, self.room),
            })
            .collect()
    }

    /// CSV with header `ts_us,x_m,y_m,cell_x_m,cell_y_m`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["ts_us", "x_m", "y_m", "cell_x_m", "cell_y_m"])?;
        for (s, c) in self.samples.iter().zip(self.cell_snapped()) {
            w.write_record([
                s.ts_us.to_string(),
                s.pos.x.to_string(),
                s.pos.y.to_string(),
                c.pos.x.to_string(),
                c.pos.y.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct TruthRow {
    ts_us: u64,
    x_m: f64,
    y_m: f64,
    cell_x_m: Option<f64>,
    cell_y_m: Option<f64>,
}

/// Reads a truth CSV. With `cells`, the cell-center columns are used (and required).
pub fn read_truth_csv(path: impl AsRef<Path>, cells: bool) -> Result<Vec<TruthSample>, SimError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: TruthRow = row?;
        let pos = if cells {
            match (r.cell_x_m, r.cell_y_m) {
                (Some(x), Some(y)) => Point2::new(x, y),
                _ => return Err(SimError::Config(format!("row at {} lacks cell columns", r.ts_us))),
            }
        } else {
            Point2::new(r.x_m, r.y_m)
        };
        out.push(TruthSample { ts_us: r.ts_us, pos });
    }
    if out.windows(2).any(|w| w[1].ts_us <= w[0].ts_us) {
        return Err(SimError::Config("truth timestamps must be strictly increasing".into()));
    }
    Ok(out)
}

struct Leg {
    t0: f64,
    t1: f64,
    from: Point2,
    to: Point2,
}

fn legs(waypoints: &[Waypoint]) -> (Vec<Leg>, f64) {
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut here = Point2::new(waypoints[0].x, waypoints[0].y);
    for (i, w) in waypoints.iter().enumerate() {
        let target = Point2::new(w.x, w.y);
        if i > 0 {
            let dur = here.distance(&target) / w.speed_mps;
            out.push(Leg {
                t0: t,
                t1: t + dur,
                from: here,
                to: target,
            });
            t += dur;
        }
        if w.dwell_s > 0.0 {
            out.push(Leg {
                t0: t,
                t1: t + w.dwell_s,
                from: target,
                to: target,
            });
            t += w.dwell_s;
        }
        here = target;
    }
    (out, t)
}

fn position_at(legs: &[Leg], end: Point2, t: f64) -> Point2 {
    for leg in legs {
        if t <= leg.t1 {
            let span = leg.t1 - leg.t0;
            let a = if span > 0.0 { ((t - leg.t0) / span).clamp(0.0, 1.0) } else { 1.0 };
            return Point2::new(
                leg.from.x + a * (leg.to.x - leg.from.x),
                leg.from.y + a * (leg.to.y - leg.from.y),
            );
        }
    }
    end
}

/// Constant-speed piecewise-linear walk through the waypoints, sampled at the
/// capture rate from `t = 0` through the trial duration inclusive.
pub fn gen_trajectory(cfg: &ScenarioConfig) -> Result<GroundTruthTrack, SimError> {
    cfg.validate()?;
    if cfg.trajectory.is_empty() {
        return Err(SimError::Config("empty trajectory".into()));
    }
    let (legs, natural) = legs(&cfg.trajectory);
    let duration = cfg.trial_duration_s.unwrap_or(natural);
    let last = cfg.trajectory[cfg.trajectory.len() - 1];
    let end = Point2::new(last.x, last.y);
    let n = (duration * cfg.capture_fps + 1e-9).floor() as usize + 1;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / cfg.capture_fps;
            TruthSample {
                ts_us: (t * 1e6).round() as u64,
                pos: position_at(&legs, end, t),
            }
        })
        .collect();
    Ok(GroundTruthTrack {
        samples,
        grid_pitch_m: cfg.grid_pitch_m,
        room: (cfg.room_w, cfg.room_h),
    })
}

/// `count` distinct-in-sequence random cell centers with one-second dwells.
pub fn random_cell_walk<R: Rng>(cfg: &ScenarioConfig, count: usize, rng: &mut R) -> Vec<Waypoint> {
    let cols = (cfg.room_w / cfg.grid_pitch_m).floor().max(1.0) as usize;
    let rows = (cfg.room_h / cfg.grid_pitch_m).floor().max(1.0) as usize;
    let mut out: Vec<Waypoint> = Vec::with_capacity(count);
    while out.len() < count {
        let (i, j) = (rng.random_range(0..cols), rng.random_range(0..rows));
        let w = Waypoint {
            x: (i as f64 + 0.5) * cfg.grid_pitch_m,
            y: (j as f64 + 0.5) * cfg.grid_pitch_m,
            speed_mps: rng.random_range(0.6..1.4),
            dwell_s: 1.0,
        };
        if out.last().is_some_and(|p| p.x == w.x && p.y == w.y) && cols * rows > 1 {
            continue;
        }
        out.push(w);
    }
    out
}
