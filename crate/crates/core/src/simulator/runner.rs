use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::eval::{evaluate_accuracy, write_xy, AccuracyStats, EvaluationReport, TrialSummary};
use super::render::render_keypoints;
use super::scenario::{ScenarioConfig, TruthKind};
use super::trajectory::{gen_trajectory, random_cell_walk, GroundTruthTrack, TruthSample};
use super::SimError;
use crate::station::{CameraNode, GroundStation, NodeConfig, NodeStats, StationOptions, StationReport, StationServer};
use crate::tracking::{Track, TrackLogWriter};
use crate::transport::{reqrep_schedule, FrameMessage, TransportMode};

/// Independent random stream for one purpose within one trial.
pub fn trial_rng(seed: u64, trial: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 16) | purpose);
    rng
}

/// Ground truth of one trial: the configured trajectory, or a fresh random
/// cell walk when `random_waypoints` is set.
pub fn trial_truth(cfg: &ScenarioConfig, trial: usize) -> Result<GroundTruthTrack, SimError> {
    cfg.validate()?;
    let mut scene = cfg.clone();
    if cfg.random_waypoints > 0 {
        scene.trajectory = random_cell_walk(cfg, cfg.random_waypoints, &mut trial_rng(cfg.rng_seed, trial, 0));
    }
    gen_trajectory(&scene)
}

/// Every captured kp17 frame of camera `camera_index` during the trial, numbered from zero.
pub fn camera_frames(
    cfg: &ScenarioConfig,
    trial: usize,
    camera_index: usize,
    truth: &GroundTruthTrack,
) -> Result<Vec<FrameMessage>, SimError> {
    let cam = cfg
        .cameras
        .get(camera_index)
        .ok_or_else(|| SimError::Config(format!("no camera {camera_index}")))?;
    let mut rng = trial_rng(cfg.rng_seed, trial, 1 + camera_index as u64);
    render_keypoints(&truth.samples, cam, cfg.pixel_noise_px, &mut rng)?
        .iter()
        .enumerate()
        .map(|(k, f)| f.to_message(cam, k as u64))
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub trial: usize,
    pub truth: GroundTruthTrack,
    /// The truth samples the estimate was scored against.
    pub scored_truth: Vec<TruthSample>,
    pub station: StationReport,
    /// Merged and (optionally) outlier-filtered estimate.
    pub estimated: Track,
    pub accuracy: AccuracyStats,
    pub nodes: BTreeMap<String, NodeStats>,
}

impl TrialOutcome {
    pub fn summary(&self) -> TrialSummary {
        TrialSummary {
            trial: self.trial,
            accuracy: self.accuracy,
            fps: self.station.mean_fps(),
        }
    }
}

/// Runs one trial: camera nodes on their own threads send rendered keypoint
/// frames over loopback TCP to a fresh ground station, whose tracks are then
/// fused and scored.
///
/// Unless `cfg.realtime` is set, detector latency is applied on a virtual
/// clock: the frames a request/reply sender would get through are selected
/// up front and sent back to back, which keeps the run deterministic and fast.
/// In real-time mode nodes pace captures on the wall clock and the station
/// sleeps the latency on every frame.
pub fn run_trial(cfg: &ScenarioConfig, trial: usize, out_dir: Option<&Path>) -> Result<TrialOutcome, SimError> {
    let truth = trial_truth(cfg, trial)?;
    let capture_ts: Vec<u64> = truth.samples.iter().map(|s| s.ts_us).collect();
    let latency_us = (cfg.detector_latency_ms * 1000.0).round() as u64;
    let delivered: Vec<usize> = reqrep_schedule(&capture_ts, latency_us, 0)
        .iter()
        .map(|d| d.index)
        .collect();

    let mut streams = Vec::with_capacity(cfg.cameras.len());
    for (ci, cam) in cfg.cameras.iter().enumerate() {
        let msgs = camera_frames(cfg, trial, ci, &truth)?;
        let msgs = if cfg.realtime {
            msgs
        } else {
            delivered.iter().map(|&i| msgs[i].clone()).collect()
        };
        streams.push((cam.camera_id().to_string(), msgs));
    }

    let opts = StationOptions {
        conf_threshold: cfg.conf_threshold,
        processing_delay: if cfg.realtime {
            Duration::from_micros(latency_us)
        } else {
            Duration::ZERO
        },
    };
    let mut station = GroundStation::new(cfg.cameras.clone(), opts);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let log = TrackLogWriter::create(dir.join(format!("trial_{trial:02}_track.csv")), &trial.to_string())?;
        station = station.with_log(log);
    }
    let station = Arc::new(station);
    let server = StationServer::start(station.clone(), "127.0.0.1:0", TransportMode::ReqRep)?;
    let addr = server.local_addr().to_string();

    let handles: Vec<_> = streams
        .into_iter()
        .map(|(id, msgs)| {
            let node_cfg = NodeConfig::new(addr.clone(), id.clone());
            let realtime = cfg.realtime;
            std::thread::spawn(move || {
                let node = CameraNode::connect(node_cfg)?;
                let stats = if realtime {
                    node.run_realtime(msgs)?
                } else {
                    node.run_sequential(msgs)?
                };
                Ok::<_, SimError>((id, stats))
            })
        })
        .collect();
    let mut nodes = BTreeMap::new();
    let mut failure = None;
    for h in handles {
        match h.join().expect("camera node thread panicked") {
            Ok((id, stats)) => {
                nodes.insert(id, stats);
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    server.shutdown(Duration::from_secs(1));
    if let Some(e) = failure {
        return Err(e);
    }

    let report = station.report()?;
    let estimated = report.fused_track(cfg.merge_mode, cfg.iqr);
    let scored_truth = match cfg.truth {
        TruthKind::Continuous => truth.samples.clone(),
        TruthKind::Cell => truth.cell_snapped(),
    };
    let accuracy = evaluate_accuracy(&estimated, &scored_truth)?;
    if let Some(dir) = out_dir {
        truth.write_csv(dir.join(format!("trial_{trial:02}_truth.csv")))?;
        write_xy(dir.join(format!("trial_{trial:02}.xy")), &estimated, &scored_truth)?;
    }
    log::info!(
        "trial {trial}: {} points, mean error {:.4} m",
        estimated.len(),
        accuracy.mean_m
    );
    Ok(TrialOutcome {
        trial,
        truth,
        scored_truth,
        station: report,
        estimated,
        accuracy,
        nodes,
    })
}

/// Runs `n` trials in sequence and aggregates them.
pub fn run_trials(
    cfg: &ScenarioConfig,
    n: usize,
    out_dir: Option<&Path>,
) -> Result<(EvaluationReport, Vec<TrialOutcome>), SimError> {
    let outcomes = (0..n)
        .map(|t| run_trial(cfg, t, out_dir))
        .collect::<Result<Vec<_>, _>>()?;
    let report = EvaluationReport::from_trials(outcomes.iter().map(TrialOutcome::summary).collect())?;
    Ok((report, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(seed: u64) -> ScenarioConfig {
        let mut c = ScenarioConfig::two_camera_room(seed);
        c.trial_duration_s = Some(6.0);
        c.random_waypoints = 3;
        c
    }

    #[test]
    fn noiseless_trial_is_exact() {
        let out = run_trial(&short(1), 0, None).unwrap();
        assert!(out.accuracy.mean_m < 1e-6, "{:?}", out.accuracy);
        assert!(out.accuracy.max_m < 1e-6);
        assert_eq!(out.station.counters.replies, out.station.counters.received);
        assert_eq!(out.station.per_camera.len(), 2);
    }

    #[test]
    fn same_config_same_result() {
        let mut c = short(4);
        c.pixel_noise_px = 2.0;
        let a = run_trial(&c, 2, None).unwrap();
        let b = run_trial(&c, 2, None).unwrap();
        assert_eq!(a.estimated, b.estimated);
        assert_eq!(a.accuracy, b.accuracy);
        let other = run_trial(&c, 3, None).unwrap();
        assert_ne!(a.truth, other.truth);
    }

    #[test]
    fn virtual_latency_thins_frames() {
        let mut c = short(2);
        c.detector_latency_ms = 300.0;
        let out = run_trial(&c, 0, None).unwrap();
        let fps = out.station.mean_fps().unwrap();
        assert!((2.9..3.6).contains(&fps), "{fps}");
    }

    #[test]
    fn writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let (report, _) = run_trials(&short(5), 2, Some(dir.path())).unwrap();
        assert_eq!(report.n_trials, 2);
        for name in ["trial_00_track.csv", "trial_01_truth.csv", "trial_01.xy"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
    }
}
