use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{
    calibrate_camera, CalibrationSample, CameraModel, CameraPlacement, GeometryError, Point2,
};
use crate::tracking::MergeMode;

use super::SimError;

/// Two feet, in meters.
pub const GRID_PITCH_M: f64 = 0.6096;

fn default_pitch() -> f64 {
    GRID_PITCH_M
}
fn default_fps() -> f64 {
    15.0
}
fn default_speed() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_conf() -> f32 {
    crate::pose::DEFAULT_CONF_THRESHOLD
}

/// A place the subject walks to, then stands on for `dwell_s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Walking speed on the leg that arrives here; unused for the first waypoint.
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    #[serde(default)]
    pub dwell_s: f64,
}

/// Which ground truth estimates are scored against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    /// The subject's exact simulated position.
    #[default]
    Continuous,
    /// The center of the grid cell the subject stands in.
    Cell,
}

/// Everything a simulated run depends on. A run is a pure function of this
/// value unless `realtime` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub room_w: f64,
    pub room_h: f64,
    #[serde(default = "default_pitch")]
    pub grid_pitch_m: f64,
    pub cameras: Vec<CameraModel>,
    #[serde(default)]
    pub trajectory: Vec<Waypoint>,
    /// When non-zero, each trial walks this many random cell centers instead of `trajectory`.
    #[serde(default)]
    pub random_waypoints: usize,
    #[serde(default)]
    pub pixel_noise_px: f64,
    #[serde(default)]
    pub detector_latency_ms: f64,
    #[serde(default = "default_fps")]
    pub capture_fps: f64,
    /// Defaults to the time needed to walk the trajectory.
    #[serde(default)]
    pub trial_duration_s: Option<f64>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_conf")]
    pub conf_threshold: f32,
    #[serde(default = "default_true")]
    pub iqr: bool,
    #[serde(default)]
    pub merge_mode: MergeMode,
    #[serde(default)]
    pub truth: TruthKind,
    /// Pace camera nodes on the wall clock and sleep the latency at the station.
    #[serde(default)]
    pub realtime: bool,
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.room_w > 0.0 && self.room_h > 0.0 && self.grid_pitch_m > 0.0) {
            return bad("room dimensions and grid pitch must be positive".into());
        }
        if !(self.pixel_noise_px >= 0.0 && self.detector_latency_ms >= 0.0) {
            return bad("noise and latency must be non-negative".into());
        }
        if !(self.capture_fps > 0.0) {
            return bad(format!("capture rate {}", self.capture_fps));
        }
        if let Some(d) = self.trial_duration_s {
            if !(d >= 0.0) {
                return bad(format!("trial duration {d}"));
            }
        }
        if self.cameras.is_empty() {
            return bad("no cameras".into());
        }
        if self.trajectory.is_empty() && self.random_waypoints == 0 {
            return bad("no trajectory and no random waypoints".into());
        }
        for (i, w) in self.trajectory.iter().enumerate() {
            if !self.contains(Point2::new(w.x, w.y)) {
                return bad(format!("waypoint {i} ({}, {}) outside the room", w.x, w.y));
            }
            if !(w.dwell_s >= 0.0) || (i > 0 && !(w.speed_mps > 0.0)) {
                return bad(format!("waypoint {i} needs positive speed and non-negative dwell"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: Point2) -> bool {
        (0.0..=self.room_w).contains(&p.x) && (0.0..=self.room_h).contains(&p.y)
    }

    /// Two cameras on adjacent walls of an 8 x 8 cell room, each walking
    /// trial visiting random cell centers.
    pub fn two_camera_room(seed: u64) -> Self {
        let side = 8.0 * GRID_PITCH_M;
        let rig = PinholeRig::default();
        let cam0 = rig
            .calibrated_model("cam0", Point2::new(side / 2.0, -1.2), 0.0)
            .expect("default rig calibrates");
        let cam1 = rig
            .calibrated_model("cam1", Point2::new(side + 1.2, side / 2.0), 90.0)
            .expect("default rig calibrates");
        ScenarioConfig {
            room_w: side,
            room_h: side,
            grid_pitch_m: GRID_PITCH_M,
            cameras: vec![cam0, cam1],
            trajectory: Vec::new(),
            random_waypoints: 6,
            pixel_noise_px: 0.0,
            detector_latency_ms: 0.0,
            capture_fps: default_fps(),
            trial_duration_s: Some(30.0),
            rng_seed: seed,
            conf_threshold: default_conf(),
            iqr: true,
            merge_mode: MergeMode::Concat,
            truth: TruthKind::Continuous,
            realtime: false,
        }
    }
}

/// An ideal pinhole camera mounted `height_m` above the floor and pitched down
/// by `tilt_deg`, used to synthesize calibration data for simulated rooms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinholeRig {
    pub height_m: f64,
    pub focal_px: f64,
    pub tilt_deg: f64,
    pub image_w: u32,
    pub image_h: u32,
    /// First row used for calibration; rows above it see too far for a useful fit.
    pub first_row: f64,
}

impl Default for PinholeRig {
    fn default() -> Self {
        PinholeRig {
            height_m: 2.4,
            focal_px: 500.0,
            tilt_deg: 35.0,
            image_w: 640,
            image_h: 480,
            first_row: 110.0,
        }
    }
}

impl PinholeRig {
    fn principal_row(&self) -> f64 {
        (self.image_h as f64 - 1.0) / 2.0
    }

    /// Ground distance and lateral scale (m/px) seen at image row `v`.
    pub fn ground_at_row(&self, v: f64) -> Option<(f64, f64)> {
        let (s, c) = self.tilt_deg.to_radians().sin_cos();
        let dv = v - self.principal_row();
        let down = self.focal_px * s + dv * c;
        if down <= 0.0 {
            return None;
        }
        let scale = self.height_m / down;
        Some((scale * (self.focal_px * c - dv * s), scale))
    }

    /// Calibration samples on `n` evenly spaced rows, with a calibration object of `object_width_m`.
    pub fn calibration_samples(&self, n: usize, object_width_m: f64) -> Vec<CalibrationSample> {
        let last = self.image_h as f64 - 1.0;
        (0..n)
            .filter_map(|i| {
                let v = self.first_row + (last - self.first_row) * i as f64 / (n - 1) as f64;
                let (depth, scale) = self.ground_at_row(v)?;
                Some(CalibrationSample::with_width(v, depth, object_width_m / scale, object_width_m))
            })
            .collect()
    }

    pub fn calibrated_model(&self, id: &str, world_pos: Point2, yaw_deg: f64) -> Result<CameraModel, GeometryError> {
        let samples = self.calibration_samples(24, 0.6096);
        let cal = calibrate_camera(
            &samples,
            CameraPlacement {
                camera_id: id.to_string(),
                image_w: self.image_w,
                image_h: self.image_h,
                principal_col: None,
                world_pos,
                yaw_deg,
            },
            crate::geometry::DEFAULT_DEPTH_DEGREE,
            crate::geometry::DEFAULT_LATERAL_DEGREE,
        )?;
        Ok(cal.model)
    }
}
