//! The ground station: receives frames, turns detections into track points,
//! logs them, and replies to senders once a frame is done.

mod feed;
mod node;
mod server;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, GeometryError};
use crate::pose::{anchor_pixel_from_pose, decode_kp17, PoseDetection, DEFAULT_CONF_THRESHOLD};
use crate::tracking::{
    fps_stats, iqr_filter, merge_camera_tracks, AnchorSource, DropCounts, FpsStats, MergeMode, Track,
    TrackLogWriter, TrackPoint, Tracker, TrackingError,
};
use crate::transport::{Encoding, FrameMessage, RawFrame, TransportError, TransportMode, DEFAULT_PORT};

pub use feed::SnapshotFeed;
pub use node::{CameraNode, NodeConfig, NodeStats};
pub use server::StationServer;

#[derive(Debug, thiserror::Error)]
pub enum StationError {
    #[error("invalid station config: {0}")]
    Config(String),
    #[error("camera model {path}: {source}")]
    Model { path: PathBuf, source: GeometryError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

fn default_listen() -> String {
    format!("0.0.0.0:{DEFAULT_PORT}")
}
fn default_true() -> bool {
    true
}
fn default_conf() -> f32 {
    DEFAULT_CONF_THRESHOLD
}
fn default_trial() -> String {
    "0".into()
}

/// `station.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Camera model file per camera id. Relative paths resolve against the config file.
    pub cameras: BTreeMap<String, PathBuf>,
    #[serde(default = "default_true")]
    pub iqr: bool,
    #[serde(default)]
    pub merge_mode: MergeMode,
    #[serde(default = "default_conf")]
    pub conf_threshold: f32,
    pub output_dir: PathBuf,
    #[serde(default = "default_trial")]
    pub trial: String,
    #[serde(default)]
    pub transport: TransportMode,
    /// Extra time spent on every frame before replying.
    #[serde(default)]
    pub processing_delay_ms: f64,
    /// Address for the line-delimited JSON feed of new track points.
    #[serde(default)]
    pub snapshot_listen: Option<String>,
}

impl StationConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StationError> {
        let path = path.as_ref();
        let mut cfg: StationConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.cameras.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Checks everything except writability, and loads the camera models.
    pub fn load_models(&self) -> Result<Vec<CameraModel>, StationError> {
        if self.cameras.is_empty() {
            return Err(StationError::Config("no cameras configured".into()));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(StationError::Config(format!("conf_threshold {}", self.conf_threshold)));
        }
        if !(self.processing_delay_ms >= 0.0 && self.processing_delay_ms.is_finite()) {
            return Err(StationError::Config(format!(
                "processing_delay_ms {}",
                self.processing_delay_ms
            )));
        }
        self.cameras
            .iter()
            .map(|(id, path)| {
                let model = CameraModel::load(path).map_err(|source| StationError::Model {
                    path: path.clone(),
                    source,
                })?;
                if model.camera_id() != id {
                    return Err(StationError::Config(format!(
                        "{} holds camera {:?}, configured as {id:?}",
                        path.display(),
                        model.camera_id()
                    )));
                }
                Ok(model)
            })
            .collect()
    }

    pub fn track_log_path(&self) -> PathBuf {
        self.output_dir.join(format!("track_{}.csv", self.trial))
    }

    pub fn options(&self) -> StationOptions {
        StationOptions {
            conf_threshold: self.conf_threshold,
            processing_delay: Duration::from_secs_f64(self.processing_delay_ms / 1000.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationOptions {
    pub conf_threshold: f32,
    /// Simulated per-frame processing time, spent before the reply.
    pub processing_delay: Duration,
}

impl Default for StationOptions {
    fn default() -> Self {
        StationOptions {
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            processing_delay: Duration::ZERO,
        }
    }
}

/// Turns image payloads (`jpeg`, `raw8`) into pose detections. Without one,
/// such frames are counted as unsupported.
pub trait KeypointDetector: Send + Sync {
    fn detect(&self, frame: &FrameMessage) -> Result<Vec<PoseDetection>, String>;
}

#[derive(Debug, Default)]
struct Counters {
    received: AtomicU64,
    processed: AtomicU64,
    replies: AtomicU64,
    malformed: AtomicU64,
    unknown_camera: AtomicU64,
    stale_seq: AtomicU64,
    no_anchor: AtomicU64,
    unsupported: AtomicU64,
    points: AtomicU64,
}

/// Point-in-time copy of the station's counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CounterSnapshot {
    /// Framed messages read off the wire.
    pub received: u64,
    /// Messages whose handling finished, whatever the outcome.
    pub processed: u64,
    pub replies: u64,
    pub malformed: u64,
    pub unknown_camera: u64,
    pub stale_seq: u64,
    /// Detections without a usable ankle.
    pub no_anchor: u64,
    pub unsupported: u64,
    /// Track points recorded.
    pub points: u64,
    pub dropped_anchors: DropCounts,
}

/// What happened to one received message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrameOutcome {
    Tracked { points: usize },
    Malformed(String),
    UnknownCamera(String),
    StaleSeq { camera_id: String, seq: u64 },
    Unsupported(String),
}

#[derive(Default)]
struct CameraActivity {
    last_seq: Option<u64>,
    /// Capture timestamps of processed frames.
    processed_ts: Vec<u64>,
    processed_at: Vec<Instant>,
}

/// Everything a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct StationReport {
    pub counters: CounterSnapshot,
    pub per_camera: BTreeMap<String, Track>,
    /// Processed-frame rate per camera, from capture timestamps.
    pub fps: BTreeMap<String, FpsStats>,
    pub track_log: Option<PathBuf>,
}

impl StationReport {
    /// Per-camera tracks merged, then optionally IQR filtered.
    pub fn fused_track(&self, mode: MergeMode, iqr: bool) -> Track {
        let tracks: Vec<Track> = self.per_camera.values().cloned().collect();
        let merged = merge_camera_tracks(&tracks, mode);
        if iqr {
            iqr_filter(&merged)
        } else {
            merged
        }
    }

    /// Mean of the per-camera frame rates.
    pub fn mean_fps(&self) -> Option<f64> {
        if self.fps.is_empty() {
            return None;
        }
        Some(self.fps.values().map(|f| f.fps).sum::<f64>() / self.fps.len() as f64)
    }
}

/// Shared processing core. One instance serves every session.
pub struct GroundStation {
    tracker: Tracker,
    opts: StationOptions,
    detector: Option<Box<dyn KeypointDetector>>,
    log: Mutex<Option<TrackLogWriter>>,
    feed: Option<Arc<SnapshotFeed>>,
    counters: Counters,
    cameras: Mutex<HashMap<String, CameraActivity>>,
}

impl GroundStation {
    pub fn new(models: impl IntoIterator<Item = CameraModel>, opts: StationOptions) -> Self {
        GroundStation {
            tracker: Tracker::new(models),
            opts,
            detector: None,
            log: Mutex::new(None),
            feed: None,
            counters: Counters::default(),
            cameras: Mutex::default(),
        }
    }

    /// Builds a station from a config, creating the output directory and track log.
    pub fn from_config(cfg: &StationConfig) -> Result<Self, StationError> {
        let models = cfg.load_models()?;
        std::fs::create_dir_all(&cfg.output_dir)?;
        let log = TrackLogWriter::create(cfg.track_log_path(), &cfg.trial)?;
        Ok(GroundStation::new(models, cfg.options()).with_log(log))
    }

    pub fn with_log(self, log: TrackLogWriter) -> Self {
        *self.log.lock().unwrap() = Some(log);
        self
    }

    pub fn with_detector(mut self, d: Box<dyn KeypointDetector>) -> Self {
        self.detector = Some(d);
        self
    }

    pub fn with_feed(mut self, feed: Arc<SnapshotFeed>) -> Self {
        self.feed = Some(feed);
        self
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn options(&self) -> StationOptions {
        self.opts
    }

    /// Newest point per person.
    pub fn latest(&self) -> HashMap<u16, TrackPoint> {
        self.tracker.latest_all()
    }

    pub fn counters(&self) -> CounterSnapshot {
        let c = &self.counters;
        let get = |a: &AtomicU64| a.load(Ordering::SeqCst);
        CounterSnapshot {
            received: get(&c.received),
            processed: get(&c.processed),
            replies: get(&c.replies),
            malformed: get(&c.malformed),
            unknown_camera: get(&c.unknown_camera),
            stale_seq: get(&c.stale_seq),
            no_anchor: get(&c.no_anchor),
            unsupported: get(&c.unsupported),
            points: get(&c.points),
            dropped_anchors: self.tracker.drops(),
        }
    }

    pub(crate) fn note_received(&self) {
        self.counters.received.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn note_reply(&self) {
        self.counters.replies.fetch_add(1, Ordering::SeqCst);
    }

    /// A message whose framing could not be recovered.
    pub(crate) fn note_unframed(&self) {
        self.counters.malformed.fetch_add(1, Ordering::SeqCst);
    }

    /// Handles one framed message end to end. Returns once the frame is fully
    /// processed, including the configured processing delay.
    pub fn process_raw(&self, raw: RawFrame) -> FrameOutcome {
        match raw.parse() {
            Ok(m) => self.process_message(m),
            Err(e) => self.finish(FrameOutcome::Malformed(e.to_string())),
        }
    }

    pub fn process_message(&self, m: FrameMessage) -> FrameOutcome {
        let started = Instant::now();
        let outcome = self.handle(&m);
        if matches!(outcome, FrameOutcome::Tracked { .. }) {
            let mut cams = self.cameras.lock().unwrap();
            let act = cams.entry(m.header.camera_id.clone()).or_default();
            act.processed_ts.push(m.header.ts_us);
            act.processed_at.push(Instant::now());
        }
        let rest = self.opts.processing_delay.saturating_sub(started.elapsed());
        if !rest.is_zero() {
            std::thread::sleep(rest);
        }
        self.finish(outcome)
    }

    fn finish(&self, outcome: FrameOutcome) -> FrameOutcome {
        let c = &self.counters;
        match &outcome {
            FrameOutcome::Tracked { points } => {
                c.points.fetch_add(*points as u64, Ordering::SeqCst);
            }
            FrameOutcome::Malformed(why) => {
                log::warn!("malformed frame: {why}");
                c.malformed.fetch_add(1, Ordering::SeqCst);
            }
            FrameOutcome::UnknownCamera(id) => {
                log::warn!("frame from unknown camera {id:?}");
                c.unknown_camera.fetch_add(1, Ordering::SeqCst);
            }
            FrameOutcome::StaleSeq { camera_id, seq } => {
                log::debug!("stale frame {camera_id}#{seq}");
                c.stale_seq.fetch_add(1, Ordering::SeqCst);
            }
            FrameOutcome::Unsupported(why) => {
                log::warn!("unsupported frame: {why}");
                c.unsupported.fetch_add(1, Ordering::SeqCst);
            }
        }
        c.processed.fetch_add(1, Ordering::SeqCst);
        outcome
    }

    fn handle(&self, m: &FrameMessage) -> FrameOutcome {
        let h = &m.header;
        if self.tracker.model(&h.camera_id).is_none() {
            return FrameOutcome::UnknownCamera(h.camera_id.clone());
        }
        {
            let mut cams = self.cameras.lock().unwrap();
            let act = cams.entry(h.camera_id.clone()).or_default();
            if act.last_seq.is_some_and(|last| h.seq <= last) {
                return FrameOutcome::StaleSeq {
                    camera_id: h.camera_id.clone(),
                    seq: h.seq,
                };
            }
            act.last_seq = Some(h.seq);
        }
        let detections = match h.encoding {
            Encoding::Kp17 => match decode_kp17(&m.payload) {
                Ok(d) => d,
                Err(e) => return FrameOutcome::Malformed(e.to_string()),
            },
            enc => match &self.detector {
                Some(det) => match det.detect(m) {
                    Ok(d) => d,
                    Err(e) => return FrameOutcome::Unsupported(e),
                },
                None => return FrameOutcome::Unsupported(format!("no detector for {enc:?} payloads")),
            },
        };
        let mut points = Vec::new();
        for d in &detections {
            let Some((px, _)) = anchor_pixel_from_pose(d, self.opts.conf_threshold) else {
                self.counters.no_anchor.fetch_add(1, Ordering::SeqCst);
                continue;
            };
            match self.tracker.ingest(h, px, d.person_tag, AnchorSource::Pose) {
                Ok(Some(p)) => points.push(p),
                Ok(None) => {}
                Err(e) => return FrameOutcome::Unsupported(e.to_string()),
            }
        }
        if let Some(log) = self.log.lock().unwrap().as_mut() {
            let written = points.iter().try_for_each(|p| log.append(p)).and_then(|_| log.flush());
            if let Err(e) = written {
                log::error!("track log write failed: {e}");
            }
        }
        if let Some(feed) = &self.feed {
            for p in &points {
                feed.publish(p);
            }
        }
        FrameOutcome::Tracked { points: points.len() }
    }

    /// Wall-clock processed-frame rate per camera.
    pub fn wall_fps(&self) -> BTreeMap<String, f64> {
        let cams = self.cameras.lock().unwrap();
        cams.iter()
            .filter_map(|(id, a)| {
                let (first, last) = (a.processed_at.first()?, a.processed_at.last()?);
                let span = last.duration_since(*first).as_secs_f64();
                (a.processed_at.len() > 1 && span > 0.0)
                    .then(|| (id.clone(), (a.processed_at.len() - 1) as f64 / span))
            })
            .collect()
    }

    /// Finalizes the track log and collects the run's results.
    pub fn report(&self) -> Result<StationReport, StationError> {
        let track_log = match self.log.lock().unwrap().take() {
            Some(w) => Some(w.finalize()?),
            None => None,
        };
        let fps = {
            let cams = self.cameras.lock().unwrap();
            cams.iter()
                .filter_map(|(id, a)| fps_stats(&a.processed_ts).ok().map(|f| (id.clone(), f)))
                .collect()
        };
        Ok(StationReport {
            counters: self.counters(),
            per_camera: self.tracker.snapshot(),
            fps,
            track_log,
        })
    }
}
