//! Ground-truth scenes rendered into keypoint streams and replayed through
//! the real transport and ground station.

mod eval;
mod render;
mod runner;
mod scenario;
mod trajectory;

pub use eval::{evaluate_accuracy, match_errors, mean_sd, write_xy, AccuracyStats, EvaluationReport, TrialSummary, MATCH_WINDOW_US};
pub use render::{render_keypoints, RenderedFrame, ANKLE_CONF, BODY_CONF};
pub use runner::{camera_frames, run_trial, run_trials, trial_rng, trial_truth, TrialOutcome};
pub use scenario::{PinholeRig, ScenarioConfig, TruthKind, Waypoint, GRID_PITCH_M};
pub use trajectory::{cell_center, gen_trajectory, random_cell_walk, read_truth_csv, GroundTruthTrack, TruthSample};

use crate::geometry::GeometryError;
use crate::pose::PoseError;
use crate::station::StationError;
use crate::tracking::TrackingError;
use crate::transport::TransportError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Station(#[from] StationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
