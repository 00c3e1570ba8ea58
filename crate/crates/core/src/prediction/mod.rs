//! Linear vector-autoregressive prediction of the evacuee position one grid
//! step ahead, optionally driven by the robot's past positions:
//!
//! `z[t+1] = c + sum_i A_i z[t-i+1] + sum_i B_i r[t-i+1]`, `i = 1..=p`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::tracking::Track;

/// Nominal prediction horizon and grid step, in seconds.
pub const DEFAULT_DT_S: f64 = 0.25;
pub const DEFAULT_LAGS: usize = 4;

/// Row-major 2x2 matrix acting on `[x, y]` column vectors.
pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, thiserror::Error)]
pub enum PredictionError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Positions on a uniform time grid starting at `t0_us`.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformSeries {
    pub t0_us: u64,
    pub dt_s: f64,
    pub positions: Vec<Point2>,
}

impl UniformSeries {
    pub fn time_us(&self, k: usize) -> u64 {
        self.t0_us + (k as f64 * self.dt_s * 1e6).round() as u64
    }
}

/// Linear interpolation of `(timestamp, position)` samples onto the grid
/// `t_first + k dt` for every grid time not after `t_last`.
pub fn resample_series(samples: &[(u64, Point2)], dt_s: f64) -> Result<UniformSeries, PredictionError> {
    check_samples(samples, dt_s)?;
    let (first, last) = (samples[0].0, samples[samples.len() - 1].0);
    resample_window(samples, first, last, dt_s)
}

fn check_samples(samples: &[(u64, Point2)], dt_s: f64) -> Result<(), PredictionError> {
    if !(dt_s.is_finite() && dt_s > 0.0) {
        return Err(PredictionError::Invalid(format!("grid step {dt_s}")));
    }
    if samples.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(PredictionError::Invalid("timestamps decrease".into()));
    }
    if samples.is_empty() {
        return Err(PredictionError::InsufficientData("empty track".into()));
    }
    Ok(())
}

fn resample_window(
    samples: &[(u64, Point2)],
    start_us: u64,
    end_us: u64,
    dt_s: f64,
) -> Result<UniformSeries, PredictionError> {
    let span_s = end_us.saturating_sub(start_us) as f64 / 1e6;
    if span_s < 2.0 * dt_s {
        return Err(PredictionError::InsufficientData(format!(
            "track spans {span_s} s, need at least {} s",
            2.0 * dt_s
        )));
    }
    let steps = (span_s / dt_s + 1e-9).floor() as usize;
    let mut positions = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = start_us as f64 + k as f64 * dt_s * 1e6;
        // last sample at or before t
        let i = samples.partition_point(|s| s.0 as f64 <= t).max(1) - 1;
        let (t0, p0) = (samples[i].0 as f64, samples[i].1);
        let p = match samples.get(i + 1) {
            Some(&(t1, p1)) if t > t0 => {
                let w = (t - t0) / (t1 as f64 - t0);
                Point2::new(p0.x + w * (p1.x - p0.x), p0.y + w * (p1.y - p0.y))
            }
            _ => p0,
        };
        positions.push(p);
    }
    Ok(UniformSeries {
        t0_us: start_us,
        dt_s,
        positions,
    })
}

/// Resamples an evacuee and a robot track onto one shared grid covering the
/// time both are observed. The robot positions are returned index-aligned
/// with the evacuee series.
pub fn aligned_series(
    evacuee: &[(u64, Point2)],
    robot: &[(u64, Point2)],
    dt_s: f64,
) -> Result<(UniformSeries, Vec<Point2>), PredictionError> {
    check_samples(evacuee, dt_s)?;
    check_samples(robot, dt_s)?;
    let start = evacuee[0].0.max(robot[0].0);
    let end = evacuee[evacuee.len() - 1].0.min(robot[robot.len() - 1].0);
    let e = resample_window(evacuee, start, end, dt_s)?;
    let r = resample_window(robot, start, end, dt_s)?;
    Ok((e, r.positions))
}

pub fn resample_uniform(track: &Track, dt_s: f64) -> Result<UniformSeries, PredictionError> {
    let samples: Vec<(u64, Point2)> = track.points().iter().map(|p| (p.ts_us, p.pos)).collect();
    resample_series(&samples, dt_s)
}

/// Fitted autoregressive model. Serialized as
/// `{"p", "dt_s", "c", "A", "B", "fit_rmse_m"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub p: usize,
    pub dt_s: f64,
    #[serde(rename = "c")]
    pub intercept: [f64; 2],
    #[serde(rename = "A")]
    pub evacuee: Vec<Mat2>,
    #[serde(rename = "B")]
    pub robot: Vec<Mat2>,
    pub fit_rmse_m: f64,
}

fn apply(m: &Mat2, z: Point2) -> Point2 {
    Point2::new(m[0][0] * z.x + m[0][1] * z.y, m[1][0] * z.x + m[1][1] * z.y)
}

impl ArModel {
    pub fn uses_robot(&self) -> bool {
        self.robot.iter().flatten().flatten().any(|&b| b != 0.0)
    }

    fn validate(&self) -> Result<(), PredictionError> {
        if self.p == 0 || self.evacuee.len() != self.p || self.robot.len() != self.p {
            return Err(PredictionError::Invalid(format!(
                "lag order {} with {} evacuee and {} robot matrices",
                self.p,
                self.evacuee.len(),
                self.robot.len()
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PredictionError> {
        let m: ArModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PredictionError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Minimum number of grid samples needed to fit lag order `p`.
pub fn min_samples(p: usize) -> usize {
    4 * p + 10
}

/// Ordinary least squares (minimum-norm when rank deficient) on the grid series.
///
/// `robot`, when given, must be aligned with `evacuee` sample for sample.
pub fn fit_ar(evacuee: &[Point2], robot: Option<&[Point2]>, p: usize) -> Result<ArModel, PredictionError> {
    fit_ar_with_step(evacuee, robot, p, DEFAULT_DT_S)
}

pub fn fit_ar_with_step(
    evacuee: &[Point2],
    robot: Option<&[Point2]>,
    p: usize,
    dt_s: f64,
) -> Result<ArModel, PredictionError> {
    if p == 0 {
        return Err(PredictionError::Invalid("lag order must be at least 1".into()));
    }
    let n = evacuee.len();
    if n < min_samples(p) {
        return Err(PredictionError::InsufficientData(format!(
            "{n} samples, lag order {p} needs {}",
            min_samples(p)
        )));
    }
    if let Some(r) = robot {
        if r.len() != n {
            return Err(PredictionError::Invalid(format!(
                "robot series has {} samples, evacuee {n}",
                r.len()
            )));
        }
    }
    let groups = if robot.is_some() { 2 } else { 1 };
    let cols = 1 + 2 * p * groups;
    let rows = n - p;
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DMatrix::zeros(rows, 2);
    for (row, t) in (p - 1..n - 1).enumerate() {
        x[(row, 0)] = 1.0;
        for i in 0..p {
            let z = evacuee[t - i];
            x[(row, 1 + 2 * i)] = z.x;
            x[(row, 2 + 2 * i)] = z.y;
            if let Some(r) = robot {
                let q = r[t - i];
                x[(row, 1 + 2 * p + 2 * i)] = q.x;
                x[(row, 2 + 2 * p + 2 * i)] = q.y;
            }
        }
        y[(row, 0)] = evacuee[t + 1].x;
        y[(row, 1)] = evacuee[t + 1].y;
    }

    let beta = crate::linalg::lstsq(&x, &y).solution;

    let mat = |col: usize| -> Mat2 {
        [
            [beta[(col, 0)], beta[(col + 1, 0)]],
            [beta[(col, 1)], beta[(col + 1, 1)]],
        ]
    };
    let evac_coeffs: Vec<Mat2> = (0..p).map(|i| mat(1 + 2 * i)).collect();
    let robot_coeffs: Vec<Mat2> = if robot.is_some() {
        (0..p).map(|i| mat(1 + 2 * p + 2 * i)).collect()
    } else {
        vec![[[0.0; 2]; 2]; p]
    };

    let resid = &y - &x * &beta;
    let fit_rmse_m = (resid.iter().map(|e| e * e).sum::<f64>() / rows as f64).sqrt();
    Ok(ArModel {
        p,
        dt_s,
        intercept: [beta[(0, 0)], beta[(0, 1)]],
        evacuee: evac_coeffs,
        robot: robot_coeffs,
        fit_rmse_m,
    })
}

/// Predicts the next grid position. Windows are ordered oldest first; only
/// the last `p` entries are used.
pub fn predict_next(
    model: &ArModel,
    evacuee: &[Point2],
    robot: Option<&[Point2]>,
) -> Result<Point2, PredictionError> {
    let p = model.p;
    if evacuee.len() < p {
        return Err(PredictionError::InsufficientData(format!(
            "evacuee window has {} samples, model needs {p}",
            evacuee.len()
        )));
    }
    let robot = match robot {
        Some(r) if r.len() >= p => Some(r),
        Some(r) => {
            return Err(PredictionError::InsufficientData(format!(
                "robot window has {} samples, model needs {p}",
                r.len()
            )))
        }
        None if model.uses_robot() => {
            return Err(PredictionError::InsufficientData("model needs a robot window".into()))
        }
        None => None,
    };
    let mut out = Point2::new(model.intercept[0], model.intercept[1]);
    for i in 0..p {
        out = out + apply(&model.evacuee[i], evacuee[evacuee.len() - 1 - i]);
        if let Some(r) = robot {
            out = out + apply(&model.robot[i], r[r.len() - 1 - i]);
        }
    }
    Ok(out)
}

/// Feeds `k` predictions back into the evacuee window. The robot window is
/// held at its last known positions.
pub fn rollout(
    model: &ArModel,
    evacuee: &[Point2],
    robot: Option<&[Point2]>,
    k: usize,
) -> Result<Vec<Point2>, PredictionError> {
    let mut window = evacuee.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let next = predict_next(model, &window, robot)?;
        window.push(next);
        out.push(next);
    }
    Ok(out)
}

/// One-step-ahead prediction paired with what actually happened.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub ts_us: u64,
    pub pred_x_m: f64,
    pub pred_y_m: f64,
    pub actual_x_m: f64,
    pub actual_y_m: f64,
}

impl PredictionRow {
    pub fn error_m(&self) -> f64 {
        (self.pred_x_m - self.actual_x_m).hypot(self.pred_y_m - self.actual_y_m)
    }
}

/// Slides the model along a grid series, predicting every sample from the `p` before it.
pub fn evaluate_series(
    model: &ArModel,
    evacuee: &UniformSeries,
    robot: Option<&[Point2]>,
) -> Result<Vec<PredictionRow>, PredictionError> {
    let z = &evacuee.positions;
    if z.len() <= model.p {
        return Err(PredictionError::InsufficientData(format!(
            "{} samples for lag order {}",
            z.len(),
            model.p
        )));
    }
    if let Some(r) = robot {
        if r.len() != z.len() {
            return Err(PredictionError::Invalid("robot series misaligned with evacuee".into()));
        }
    }
    (model.p..z.len())
        .map(|t| {
            let pred = predict_next(model, &z[..t], robot.map(|r| &r[..t]))?;
            Ok(PredictionRow {
                ts_us: evacuee.time_us(t),
                pred_x_m: pred.x,
                pred_y_m: pred.y,
                actual_x_m: z[t].x,
                actual_y_m: z[t].y,
            })
        })
        .collect()
}

pub fn rows_rmse(rows: &[PredictionRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    (rows.iter().map(|r| r.error_m().powi(2)).sum::<f64>() / rows.len() as f64).sqrt()
}

pub fn write_prediction_csv(path: impl AsRef<Path>, rows: &[PredictionRow]) -> Result<(), PredictionError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn line(n: usize, start: Point2, vel: Point2, dt: f64) -> Vec<Point2> {
        (0..n)
            .map(|k| Point2::new(start.x + vel.x * dt * k as f64, start.y + vel.y * dt * k as f64))
            .collect()
    }

    #[test]
    fn aligned_series_share_the_overlap() {
        let evac: Vec<(u64, Point2)> = (0..20).map(|k| (k * 100_000, Point2::new(k as f64, 0.0))).collect();
        let robot: Vec<(u64, Point2)> = (5..30).map(|k| (k * 100_000, Point2::new(0.0, k as f64))).collect();
        let (e, r) = aligned_series(&evac, &robot, 0.25).unwrap();
        assert_eq!(e.t0_us, 500_000);
        // overlap 0.5 s .. 1.9 s holds grid points 0.5, 0.75, ..., 1.75
        assert_eq!(e.positions.len(), 6);
        assert_eq!(r.len(), 6);
        assert!((e.positions[1].x - 7.5).abs() < 1e-12);
        assert!((r[1].y - 7.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_track_resamples_to_itself() {
        let pts: Vec<(u64, Point2)> = (0..9).map(|k| (k * 250_000, Point2::new(k as f64, -(k as f64)))).collect();
        let s = resample_series(&pts, 0.25).unwrap();
        assert_eq!(s.positions, pts.iter().map(|p| p.1).collect::<Vec<_>>());
    }

    #[test]
    fn two_point_interpolation() {
        let pts = [(0, Point2::new(0.0, 0.0)), (1_000_000, Point2::new(4.0, 0.0))];
        let s = resample_series(&pts, 0.25).unwrap();
        let xs: Vec<f64> = s.positions.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn short_span_rejected() {
        let pts = [(0, Point2::new(0.0, 0.0)), (400_000, Point2::new(1.0, 0.0))];
        assert!(matches!(resample_series(&pts, 0.25), Err(PredictionError::InsufficientData(_))));
    }

    #[test]
    fn jittered_sinusoid_matches_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut t = 0u64;
        let pts: Vec<(u64, Point2)> = (0..80)
            .map(|_| {
                t += rng.random_range(200_000..450_000);
                let s = t as f64 / 1e6;
                (t, Point2::new(s.sin(), (0.7 * s).cos()))
            })
            .collect();
        let got = resample_series(&pts, 0.25).unwrap();
        // oracle: scan for the bracketing pair at each grid time
        let t0 = pts[0].0 as f64;
        for (k, p) in got.positions.iter().enumerate() {
            let tg = t0 + k as f64 * 250_000.0;
            let j = (0..pts.len() - 1)
                .find(|&j| pts[j].0 as f64 <= tg && tg <= pts[j + 1].0 as f64)
                .unwrap();
            let (ta, tb) = (pts[j].0 as f64, pts[j + 1].0 as f64);
            let a = (tg - ta) / (tb - ta);
            let ex = pts[j].1.x * (1.0 - a) + pts[j + 1].1.x * a;
            let ey = pts[j].1.y * (1.0 - a) + pts[j + 1].1.y * a;
            assert!((p.x - ex).abs() < 1e-9 && (p.y - ey).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_trajectory_is_a_fixed_point() {
        let z = vec![Point2::new(1.5, -2.0); 40];
        let m = fit_ar(&z, None, 4).unwrap();
        assert!(m.fit_rmse_m < 1e-12, "{}", m.fit_rmse_m);
        let p = predict_next(&m, &z[..10], None).unwrap();
        assert!((p.x - 1.5).abs() < 1e-9 && (p.y + 2.0).abs() < 1e-9);
    }

    #[test]
    fn linear_motion_is_exact() {
        let vel = Point2::new(0.8, -0.3);
        let z = line(60, Point2::new(2.0, 3.0), vel, 0.25);
        for p in [2, 4] {
            let m = fit_ar(&z, None, p).unwrap();
            assert!(m.fit_rmse_m < 1e-9, "p={p} rmse {}", m.fit_rmse_m);
            // continue the same line past the training data
            let window = line(80, Point2::new(2.0, 3.0), vel, 0.25)[70..].to_vec();
            let next = predict_next(&m, &window, None).unwrap();
            let last = window[9];
            assert!((next.x - (last.x + vel.x * 0.25)).abs() < 1e-9);
            assert!((next.y - (last.y + vel.y * 0.25)).abs() < 1e-9);
            let r = rollout(&m, &window, None, 1).unwrap();
            assert_eq!(r[0], next);
        }
    }

    #[test]
    fn insufficient_samples() {
        let z = vec![Point2::default(); 25];
        assert!(matches!(fit_ar(&z, None, 4), Err(PredictionError::InsufficientData(_))));
        let z = vec![Point2::default(); 26];
        assert!(fit_ar(&z, None, 4).is_ok());
        let m = fit_ar(&z, None, 4).unwrap();
        assert!(predict_next(&m, &z[..3], None).is_err());
    }

    #[test]
    fn model_file_shape() {
        let z = line(30, Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), 0.25);
        let m = fit_ar(&z, None, 2).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["p"], 2);
        assert_eq!(v["dt_s"], 0.25);
        assert_eq!(v["A"].as_array().unwrap().len(), 2);
        assert_eq!(v["B"][1][0][0], 0.0);
        let back: ArModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn least_squares_beats_zero_model() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let z: Vec<Point2> = (0..80)
            .map(|_| Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let m = fit_ar(&z, None, 3).unwrap();
        let zero_rmse = (z[3..].iter().map(|p| p.x * p.x + p.y * p.y).sum::<f64>() / (z.len() - 3) as f64).sqrt();
        assert!(m.fit_rmse_m <= zero_rmse);
    }
}
