use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trajectory::TruthSample;
use super::SimError;
use crate::tracking::Track;

/// Estimates farther than this from every truth timestamp are not scored.
pub const MATCH_WINDOW_US: u64 = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub mean_m: f64,
    /// Sample standard deviation (n - 1); zero for a single match.
    pub sd_m: f64,
    pub min_m: f64,
    pub max_m: f64,
    pub n_matched: usize,
    pub n_unmatched: usize,
}

/// Mean and sample standard deviation. `None` for an empty slice.
pub fn mean_sd(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

/// Index of the truth sample nearest to `ts` in time (earlier one on ties).
fn nearest(truth: &[TruthSample], ts: u64) -> usize {
    let i = truth.partition_point(|s| s.ts_us < ts);
    if i == 0 {
        return 0;
    }
    if i == truth.len() {
        return i - 1;
    }
    if ts - truth[i - 1].ts_us <= truth[i].ts_us - ts {
        i - 1
    } else {
        i
    }
}

/// Euclidean error of every estimate whose nearest truth sample lies within
/// [`MATCH_WINDOW_US`]. Returns the errors and the number of unmatched estimates.
pub fn match_errors(estimated: &Track, truth: &[TruthSample]) -> (Vec<f64>, usize) {
    let mut errors = Vec::with_capacity(estimated.len());
    let mut unmatched = 0;
    if truth.is_empty() {
        return (errors, estimated.len());
    }
    for p in estimated.points() {
        let s = &truth[nearest(truth, p.ts_us)];
        if s.ts_us.abs_diff(p.ts_us) <= MATCH_WINDOW_US {
            errors.push(p.pos.distance(&s.pos));
        } else {
            unmatched += 1;
        }
    }
    (errors, unmatched)
}

pub fn evaluate_accuracy(estimated: &Track, truth: &[TruthSample]) -> Result<AccuracyStats, SimError> {
    if estimated.is_empty() || truth.is_empty() {
        return Err(SimError::Evaluation("estimated and truth tracks must be non-empty".into()));
    }
    let (errors, n_unmatched) = match_errors(estimated, truth);
    let Some((mean_m, sd_m)) = mean_sd(&errors) else {
        return Err(SimError::Evaluation(format!(
            "none of {} estimates lies within {} ms of a truth sample",
            estimated.len(),
            MATCH_WINDOW_US / 1000
        )));
    };
    Ok(AccuracyStats {
        mean_m,
        sd_m,
        min_m: errors.iter().cloned().fold(f64::INFINITY, f64::min),
        max_m: errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        n_matched: errors.len(),
        n_unmatched,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    #[serde(flatten)]
    pub accuracy: AccuracyStats,
    /// Mean processed-frame rate over the trial's cameras.
    pub fps: Option<f64>,
}

/// Across-trial report. Mean, SD, min and max are taken over the per-trial mean errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mean_m: f64,
    pub sd_m: f64,
    pub min_m: f64,
    pub max_m: f64,
    pub fps_mean: Option<f64>,
    pub fps_sd: Option<f64>,
    pub n_trials: usize,
    pub per_trial: Vec<TrialSummary>,
}

impl EvaluationReport {
    pub fn from_trials(per_trial: Vec<TrialSummary>) -> Result<Self, SimError> {
        let means: Vec<f64> = per_trial.iter().map(|t| t.accuracy.mean_m).collect();
        let (mean_m, sd_m) = mean_sd(&means).ok_or_else(|| SimError::Evaluation("no trials".into()))?;
        let fps: Vec<f64> = per_trial.iter().filter_map(|t| t.fps).collect();
        let (fps_mean, fps_sd) = match mean_sd(&fps) {
            Some((m, s)) => (Some(m), Some(s)),
            None => (None, None),
        };
        Ok(EvaluationReport {
            mean_m,
            sd_m,
            min_m: means.iter().cloned().fold(f64::INFINITY, f64::min),
            max_m: means.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            fps_mean,
            fps_sd,
            n_trials: per_trial.len(),
            per_trial,
        })
    }

    /// One-line summary in the form `error (M=0.556, SD=0.069) m, min 0.430 m, max 0.710 m`.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "error (M={:.3}, SD={:.3}) m, min {:.3} m, max {:.3} m over {} trials",
            self.mean_m, self.sd_m, self.min_m, self.max_m, self.n_trials
        );
        if let (Some(m), Some(sd)) = (self.fps_mean, self.fps_sd) {
            s += &format!("; FPS (M={m:.3}, SD={sd:.3})");
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Gnuplot data file with two indexed blocks: estimated positions (index 0)
/// and truth positions (index 1), each as `ts_s x_m y_m` rows.
pub fn write_xy(path: impl AsRef<Path>, estimated: &Track, truth: &[TruthSample]) -> Result<(), SimError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# estimated: ts_s x_m y_m")?;
    for p in estimated.points() {
        writeln!(w, "{} {} {}", p.ts_us as f64 / 1e6, p.pos.x, p.pos.y)?;
    }
    writeln!(w, "\n\n# truth: ts_s x_m y_m")?;
    for s in truth {
        writeln!(w, "{} {} {}", s.ts_us as f64 / 1e6, s.pos.x, s.pos.y)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::tracking::{AnchorSource, TrackPoint};

    fn truth() -> Vec<TruthSample> {
        (0..20)
            .map(|k| TruthSample {
                ts_us: k * 100_000,
                pos: Point2::new(0.1 * k as f64, 1.0),
            })
            .collect()
    }

    fn track_from(samples: &[TruthSample], offset: Point2, dt: i64) -> Track {
        Track::from_points(
            samples
                .iter()
                .map(|s| TrackPoint {
                    ts_us: (s.ts_us as i64 + dt) as u64,
                    pos: s.pos + offset,
                    camera_id: "cam0".into(),
                    person_tag: 0,
                    source: AnchorSource::Pose,
                })
                .collect(),
        )
    }

    #[test]
    fn identical_tracks_have_zero_error() {
        let t = truth();
        let s = evaluate_accuracy(&track_from(&t, Point2::new(0.0, 0.0), 0), &t).unwrap();
        assert_eq!((s.mean_m, s.sd_m, s.n_matched, s.n_unmatched), (0.0, 0.0, 20, 0));
    }

    #[test]
    fn constant_offset_gives_pythagorean_error() {
        let t = truth();
        let s = evaluate_accuracy(&track_from(&t, Point2::new(0.3, 0.4), 0), &t).unwrap();
        assert!((s.mean_m - 0.5).abs() < 1e-15);
        assert!(s.sd_m < 1e-15);
    }

    #[test]
    fn estimates_outside_window_are_counted_not_scored() {
        let t = truth();
        let mut pts = track_from(&t[..2], Point2::new(0.0, 0.0), 0).into_points();
        pts.push(TrackPoint {
            ts_us: 1_900_000 + 200_001,
            ..pts[0].clone()
        });
        let s = evaluate_accuracy(&Track::from_points(pts), &t).unwrap();
        assert_eq!((s.n_matched, s.n_unmatched), (2, 1));
    }

    #[test]
    fn no_matches_is_an_error() {
        let t = truth();
        let far = track_from(&t[..1], Point2::new(0.0, 0.0), 10_000_000);
        assert!(matches!(evaluate_accuracy(&far, &t), Err(SimError::Evaluation(_))));
        assert!(evaluate_accuracy(&Track::new(), &t).is_err());
    }

    #[test]
    fn nearest_prefers_closer_then_earlier() {
        let t = truth();
        assert_eq!(nearest(&t, 149_999), 1);
        assert_eq!(nearest(&t, 150_000), 1);
        assert_eq!(nearest(&t, 150_001), 2);
        assert_eq!(nearest(&t, 99_000_000), 19);
    }

    #[test]
    fn report_aggregates_per_trial_means() {
        let per: Vec<TrialSummary> = [0.5, 0.6, 0.7]
            .iter()
            .enumerate()
            .map(|(i, &m)| TrialSummary {
                trial: i,
                accuracy: AccuracyStats {
                    mean_m: m,
                    sd_m: 0.0,
                    min_m: m,
                    max_m: m,
                    n_matched: 1,
                    n_unmatched: 0,
                },
                fps: Some(3.0 + i as f64),
            })
            .collect();
        let r = EvaluationReport::from_trials(per).unwrap();
        assert!((r.mean_m - 0.6).abs() < 1e-12);
        assert!((r.sd_m - 0.1).abs() < 1e-12);
        assert_eq!((r.min_m, r.max_m, r.n_trials), (0.5, 0.7, 3));
        assert_eq!((r.fps_mean, r.fps_sd), (Some(4.0), Some(1.0)));
        let json: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["mean_m", "sd_m", "min_m", "max_m", "fps_mean", "fps_sd", "n_trials", "per_trial"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["per_trial"][1]["mean_m"], 0.6);
    }
}
