//! Multi-camera ground-plane position tracking.
//!
//! Camera nodes stream keypoint detections to a ground station, which maps the
//! ground-contact pixel of each person to world coordinates with a per-camera
//! polynomial model, accumulates per-camera tracks, filters outliers, and fits
//! an autoregressive predictor of the next position. A simulator with known
//! ground truth drives every stage end to end.

pub mod geometry;
mod linalg;
pub mod pose;
pub mod prediction;
pub mod simulator;
pub mod station;
pub mod tracking;
pub mod transport;

pub use geometry::{CalibrationSample, CameraModel, Pixel, Point2};
pub use pose::{Keypoint, PoseDetection};
pub use prediction::ArModel;
pub use simulator::ScenarioConfig;
pub use station::{GroundStation, StationConfig};
pub use tracking::{Track, TrackPoint};
pub use transport::{FrameHeader, FrameMessage};
