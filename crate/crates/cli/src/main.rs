use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gridtrack::geometry::{calibrate_camera, read_calibration_csv, CameraPlacement, Point2};
use gridtrack::prediction::{aligned_series, evaluate_series, fit_ar_with_step, resample_series, rows_rmse, ArModel};
use gridtrack::simulator::{
    camera_frames, evaluate_accuracy, read_truth_csv, run_trials, trial_truth, ScenarioConfig,
};
use gridtrack::station::{CameraNode, GroundStation, NodeConfig, SnapshotFeed, StationConfig, StationServer};
use gridtrack::tracking::{iqr_filter, merge_camera_tracks, read_track_csv, AnchorSource, MergeMode, Track, TrackLogRow};
use gridtrack::transport::{read_raw_frame, FrameMessage, TransportMode};

#[derive(Parser)]
#[command(name = "gridtrack", version, about = "Multi-camera ground-plane tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ground station.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Stop after this many seconds and finalize the track log.
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Stream keypoint frames to a ground station.
    CameraNode {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        cam_id: String,
        #[arg(long, value_enum)]
        source: Source,
        /// Concatenated wire-format frames (for `--source kp17-file`).
        #[arg(long)]
        file: Option<PathBuf>,
        /// Scenario whose camera `--cam-id` is rendered (for `--source synthetic`).
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long, value_enum, default_value_t = Mode::Reqrep)]
        mode: Mode,
        /// Pace frames on the wall clock at their capture timestamps.
        #[arg(long)]
        realtime: bool,
        #[arg(long, default_value_t = 5.0)]
        timeout_s: f64,
    },
    /// Fit a camera model from calibration samples.
    Calibrate {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        /// Degree of the lateral scale fit; defaults to `--degree`.
        #[arg(long)]
        lateral_degree: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "cam0")]
        cam_id: String,
        #[arg(long, default_value_t = 640)]
        image_w: u32,
        #[arg(long, default_value_t = 480)]
        image_h: u32,
        #[arg(long)]
        principal_col: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        pos_x: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        pos_y: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        yaw_deg: f64,
    },
    /// Run simulated trials and write an evaluation report.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-trial track logs, truth CSVs and gnuplot files.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise_px: Option<f64>,
        #[arg(long)]
        latency_ms: Option<f64>,
        #[arg(long)]
        realtime: bool,
    },
    /// Score a track log against ground truth; prints JSON.
    Evaluate {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Score against cell centers instead of exact positions.
        #[arg(long)]
        cells: bool,
        #[arg(long, default_value = "concat")]
        merge_mode: MergeMode,
        #[arg(long)]
        iqr: bool,
    },
    /// Fit an autoregressive position predictor to a track log.
    PredictFit {
        #[arg(long)]
        track: PathBuf,
        #[arg(long, default_value_t = 4)]
        lags: usize,
        #[arg(long, default_value_t = 0.25)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
        /// Ignore robot (`bbox`) rows even when present.
        #[arg(long)]
        no_robot: bool,
    },
    /// Replay a fitted predictor over a track log; writes prediction CSV.
    PredictEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        track: PathBuf,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Kp17File,
    Synthetic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Reqrep,
    Pubsub,
}

impl From<Mode> for TransportMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Reqrep => TransportMode::ReqRep,
            Mode::Pubsub => TransportMode::PubSub,
        }
    }
}

/// Bad invocation: exit status 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn existing(p: &Path) -> Result<&Path> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(usage(format!("no such file: {}", p.display())))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDTRACK_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Serve { config, duration_s } => serve(&config, duration_s),
        Command::CameraNode {
            connect,
            cam_id,
            source,
            file,
            scenario,
            trial,
            mode,
            realtime,
            timeout_s,
        } => {
            let frames = match source {
                Source::Kp17File => {
                    let file = file.ok_or_else(|| usage("--source kp17-file needs --file"))?;
                    frames_from_file(existing(&file)?, &cam_id)?
                }
                Source::Synthetic => {
                    let scenario = scenario.ok_or_else(|| usage("--source synthetic needs --scenario"))?;
                    synthetic_frames(existing(&scenario)?, &cam_id, trial)?
                }
            };
            let mut cfg = NodeConfig::new(connect.clone(), cam_id);
            cfg.mode = mode.into();
            cfg.reply_timeout = Duration::from_secs_f64(timeout_s);
            let node = CameraNode::connect(cfg).with_context(|| format!("connecting to {connect}"))?;
            let stats = if realtime {
                node.run_realtime(frames)?
            } else {
                node.run_sequential(frames)?
            };
            println!("{}", serde_json::to_string(&stats)?);
            Ok(())
        }
        Command::Calibrate {
            samples,
            degree,
            lateral_degree,
            out,
            cam_id,
            image_w,
            image_h,
            principal_col,
            pos_x,
            pos_y,
            yaw_deg,
        } => {
            let samples = read_calibration_csv(existing(&samples)?)?;
            let placement = CameraPlacement {
                camera_id: cam_id,
                image_w,
                image_h,
                principal_col,
                world_pos: Point2::new(pos_x, pos_y),
                yaw_deg,
            };
            let cal = calibrate_camera(&samples, placement, degree, lateral_degree.unwrap_or(degree))?;
            for w in cal.depth.warnings.iter().chain(&cal.lateral.warnings) {
                eprintln!("warning: {w:?}");
            }
            cal.model.save(&out)?;
            let (lo, hi) = cal.model.valid_rows();
            println!(
                "depth rms {:.6} m, lateral rms {:.3e} m/px, valid rows [{lo}, {hi}] -> {}",
                cal.depth.rms,
                cal.lateral.rms,
                out.display()
            );
            Ok(())
        }
        Command::Simulate {
            scenario,
            trials,
            out,
            artifacts,
            seed,
            noise_px,
            latency_ms,
            realtime,
        } => {
            let mut cfg = ScenarioConfig::load(existing(&scenario)?)?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            if let Some(n) = noise_px {
                cfg.pixel_noise_px = n;
            }
            if let Some(l) = latency_ms {
                cfg.detector_latency_ms = l;
            }
            cfg.realtime |= realtime;
            cfg.validate()?;
            if trials == 0 {
                return Err(usage("--trials must be at least 1"));
            }
            let (report, _) = run_trials(&cfg, trials, artifacts.as_deref())?;
            report.save(&out)?;
            println!("{}", report.summary());
            Ok(())
        }
        Command::Evaluate {
            est,
            truth,
            cells,
            merge_mode,
            iqr,
        } => {
            let rows = read_track_csv(existing(&est)?)?;
            let truth = read_truth_csv(existing(&truth)?, cells)?;
            let track = fused(&rows, merge_mode, iqr);
            let stats = evaluate_accuracy(&track, &truth)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
            Ok(())
        }
        Command::PredictFit {
            track,
            lags,
            dt,
            out,
            no_robot,
        } => {
            let rows = read_track_csv(existing(&track)?)?;
            let (evac, robot) = split_sources(&rows);
            let model = if robot.is_empty() || no_robot {
                let series = resample_series(&evac, dt)?;
                fit_ar_with_step(&series.positions, None, lags, dt)?
            } else {
                let (series, robot) = aligned_series(&evac, &robot, dt)?;
                fit_ar_with_step(&series.positions, Some(&robot), lags, dt)?
            };
            model.save(&out)?;
            println!(
                "AR({}) {} robot terms, fit rmse {:.6} m -> {}",
                model.p,
                if model.uses_robot() { "with" } else { "without" },
                model.fit_rmse_m,
                out.display()
            );
            Ok(())
        }
        Command::PredictEval { model, track, out } => {
            let model = ArModel::load(existing(&model)?)?;
            let rows = read_track_csv(existing(&track)?)?;
            let (evac, robot) = split_sources(&rows);
            let result = if model.uses_robot() {
                if robot.is_empty() {
                    bail!("model uses robot terms but the track has no bbox rows");
                }
                let (series, robot) = aligned_series(&evac, &robot, model.dt_s)?;
                evaluate_series(&model, &series, Some(&robot))?
            } else {
                let series = resample_series(&evac, model.dt_s)?;
                evaluate_series(&model, &series, None)?
            };
            match out {
                Some(p) => gridtrack::prediction::write_prediction_csv(&p, &result)?,
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
                    for r in &result {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                }
            }
            eprintln!("prediction rmse {:.6} m over {} steps", rows_rmse(&result), result.len());
            Ok(())
        }
    }
}

fn serve(config: &Path, duration_s: Option<f64>) -> Result<()> {
    let cfg = StationConfig::load(existing(config)?)?;
    let mut station = GroundStation::from_config(&cfg)?;
    let feed = match &cfg.snapshot_listen {
        Some(addr) => {
            let feed = SnapshotFeed::bind(addr).with_context(|| format!("snapshot feed on {addr}"))?;
            eprintln!("snapshot feed on {}", feed.local_addr());
            station = station.with_feed(feed.clone());
            Some(feed)
        }
        None => None,
    };
    let station = Arc::new(station);
    let server = StationServer::start(station.clone(), &cfg.listen, cfg.transport)?;
    eprintln!("listening on {}", server.local_addr());
    std::io::stderr().flush()?;
    let Some(d) = duration_s else {
        server.wait();
        return Ok(());
    };
    std::thread::sleep(Duration::from_secs_f64(d));
    server.shutdown(Duration::from_millis(500));
    if let Some(f) = feed {
        f.close();
    }
    let report = station.report()?;
    println!("{}", serde_json::to_string(&report.counters)?);
    Ok(())
}

fn frames_from_file(path: &Path, cam_id: &str) -> Result<Vec<FrameMessage>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut frames = Vec::new();
    while let Some(raw) = read_raw_frame(&mut r).with_context(|| format!("reading {}", path.display()))? {
        let mut m = raw.parse()?;
        m.header.camera_id = cam_id.to_string();
        frames.push(m);
    }
    Ok(frames)
}

fn synthetic_frames(path: &Path, cam_id: &str, trial: usize) -> Result<Vec<FrameMessage>> {
    let cfg = ScenarioConfig::load(path)?;
    let index = cfg
        .cameras
        .iter()
        .position(|c| c.camera_id() == cam_id)
        .ok_or_else(|| usage(format!("scenario has no camera {cam_id:?}")))?;
    let truth = trial_truth(&cfg, trial)?;
    Ok(camera_frames(&cfg, trial, index, &truth)?)
}

fn fused(rows: &[TrackLogRow], mode: MergeMode, iqr: bool) -> Track {
    let mut by_camera: std::collections::BTreeMap<&str, Vec<_>> = Default::default();
    for r in rows {
        by_camera.entry(r.camera_id.as_str()).or_default().push(r.to_point());
    }
    let tracks: Vec<Track> = by_camera.into_values().map(Track::from_points).collect();
    let merged = merge_camera_tracks(&tracks, mode);
    if iqr {
        iqr_filter(&merged)
    } else {
        merged
    }
}

type Samples = Vec<(u64, Point2)>;

/// Evacuee (pose) and robot (bbox) samples in time order.
fn split_sources(rows: &[TrackLogRow]) -> (Samples, Samples) {
    let (mut evac, mut robot) = (Vec::new(), Vec::new());
    for r in rows {
        let s = (r.ts_us, Point2::new(r.x_m, r.y_m));
        match r.source {
            AnchorSource::Pose => evac.push(s),
            AnchorSource::Bbox => robot.push(s),
        }
    }
    evac.sort_by_key(|s| s.0);
    robot.sort_by_key(|s| s.0);
    (evac, robot)
}
