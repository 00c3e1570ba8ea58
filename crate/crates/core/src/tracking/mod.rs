//! World-space tracks built from per-camera anchor detections.

mod iqr;
mod log;
mod merge;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, GeometryError, Pixel, Point2};
use crate::transport::FrameHeader;

pub use self::log::{read_track_csv, write_track_csv, TrackLogRow, TrackLogWriter, TRACK_LOG_HEADER};
pub use iqr::{iqr_bounds, iqr_filter, iqr_filter_with, quantile_linear, IQR_FENCE};
pub use merge::{merge_camera_tracks, MergeMode, MERGE_WINDOW_US};

#[derive(Debug, thiserror::Error)]
pub enum TrackingError {
    #[error("no camera model for {0:?}")]
    MissingModel(String),
    #[error("{0}")]
    UndefinedStat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// What kind of detection produced a track point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorSource {
    #[default]
    Pose,
    Bbox,
}

impl AnchorSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnchorSource::Pose => "pose",
            AnchorSource::Bbox => "bbox",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub ts_us: u64,
    pub pos: Point2,
    pub camera_id: String,
    pub person_tag: u16,
    pub source: AnchorSource,
}

/// Track points ordered by timestamp (ties ordered by camera id).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Track {
    points: Vec<TrackPoint>,
}

impl Track {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(mut points: Vec<TrackPoint>) -> Self {
        points.sort_by(|a, b| a.ts_us.cmp(&b.ts_us).then_with(|| a.camera_id.cmp(&b.camera_id)));
        Track { points }
    }

    pub(crate) fn from_sorted_unchecked(points: Vec<TrackPoint>) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0].ts_us <= w[1].ts_us));
        Track { points }
    }

    /// Appends a point; it must not be older than the current last point.
    pub fn push(&mut self, p: TrackPoint) -> Result<(), TrackPoint> {
        match self.points.last() {
            Some(last) if last.ts_us > p.ts_us => Err(p),
            _ => {
                self.points.push(p);
                Ok(())
            }
        }
    }

    pub fn points(&self) -> &[TrackPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<TrackPoint> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn timestamps(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.ts_us).collect()
    }
}

/// Why an anchor did not become a track point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DropReason {
    RowOutOfCalibration,
    ColumnOutOfImage,
    NonFinite,
}

/// Projects one anchor pixel to the ground plane using `model`.
pub fn ingest_detection(
    model: &CameraModel,
    header: &FrameHeader,
    anchor: Pixel,
    person_tag: u16,
    source: AnchorSource,
) -> Result<TrackPoint, DropReason> {
    if !(anchor.u.is_finite() && anchor.v.is_finite()) {
        return Err(DropReason::NonFinite);
    }
    let pos = model.pixel_to_world(anchor).map_err(|e| match e {
        GeometryError::ColumnOutOfRange { .. } => DropReason::ColumnOutOfImage,
        _ => DropReason::RowOutOfCalibration,
    })?;
    Ok(TrackPoint {
        ts_us: header.ts_us,
        pos,
        camera_id: header.camera_id.clone(),
        person_tag,
        source,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DropCounts {
    pub row_out_of_calibration: u64,
    pub column_out_of_image: u64,
    pub non_finite: u64,
}

impl DropCounts {
    pub fn total(&self) -> u64 {
        self.row_out_of_calibration + self.column_out_of_image + self.non_finite
    }

    fn record(&mut self, r: DropReason) {
        match r {
            DropReason::RowOutOfCalibration => self.row_out_of_calibration += 1,
            DropReason::ColumnOutOfImage => self.column_out_of_image += 1,
            DropReason::NonFinite => self.non_finite += 1,
        }
    }
}

#[derive(Default)]
struct TrackerState {
    per_camera: BTreeMap<String, Vec<TrackPoint>>,
    latest: HashMap<u16, TrackPoint>,
    drops: DropCounts,
}

/// Shared, append-only track store fed concurrently by camera sessions.
pub struct Tracker {
    models: HashMap<String, Arc<CameraModel>>,
    state: Mutex<TrackerState>,
}

impl Tracker {
    pub fn new(models: impl IntoIterator<Item = CameraModel>) -> Self {
        Tracker {
            models: models
                .into_iter()
                .map(|m| (m.camera_id().to_string(), Arc::new(m)))
                .collect(),
            state: Mutex::default(),
        }
    }

    pub fn model(&self, camera_id: &str) -> Option<&Arc<CameraModel>> {
        self.models.get(camera_id)
    }

    pub fn camera_ids(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    /// Projects and records one anchor. `Ok(None)` means the anchor was
    /// dropped and counted.
    pub fn ingest(
        &self,
        header: &FrameHeader,
        anchor: Pixel,
        person_tag: u16,
        source: AnchorSource,
    ) -> Result<Option<TrackPoint>, TrackingError> {
        let model = self
            .models
            .get(&header.camera_id)
            .ok_or_else(|| TrackingError::MissingModel(header.camera_id.clone()))?;
        let result = ingest_detection(model, header, anchor, person_tag, source);
        let mut st = self.state.lock().unwrap();
        match result {
            Ok(p) => {
                st.per_camera.entry(p.camera_id.clone()).or_default().push(p.clone());
                let newer = st.latest.get(&person_tag).is_none_or(|cur| cur.ts_us <= p.ts_us);
                if newer {
                    st.latest.insert(person_tag, p.clone());
                }
                Ok(Some(p))
            }
            Err(reason) => {
                st.drops.record(reason);
                Ok(None)
            }
        }
    }

    pub fn drops(&self) -> DropCounts {
        self.state.lock().unwrap().drops
    }

    pub fn latest(&self, person_tag: u16) -> Option<TrackPoint> {
        self.state.lock().unwrap().latest.get(&person_tag).cloned()
    }

    pub fn latest_all(&self) -> HashMap<u16, TrackPoint> {
        self.state.lock().unwrap().latest.clone()
    }

    /// Per-camera tracks as of now.
    pub fn snapshot(&self) -> BTreeMap<String, Track> {
        let st = self.state.lock().unwrap();
        st.per_camera
            .iter()
            .map(|(k, v)| (k.clone(), Track::from_points(v.clone())))
            .collect()
    }

    pub fn point_count(&self) -> usize {
        self.state.lock().unwrap().per_camera.values().map(Vec::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpsStats {
    pub fps: f64,
    pub frames: usize,
    pub span_s: f64,
}

/// Processed-frame rate `(N - 1) / (t_last - t_first)`.
pub fn fps_stats(ts_us: &[u64]) -> Result<FpsStats, TrackingError> {
    if ts_us.len() < 2 {
        return Err(TrackingError::UndefinedStat(format!(
            "frame rate needs at least 2 timestamps, got {}",
            ts_us.len()
        )));
    }
    let first = ts_us[0];
    let last = ts_us[ts_us.len() - 1];
    if last <= first {
        return Err(TrackingError::UndefinedStat("timestamps span no time".into()));
    }
    let span_s = (last - first) as f64 / 1e6;
    Ok(FpsStats {
        fps: (ts_us.len() - 1) as f64 / span_s,
        frames: ts_us.len(),
        span_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraModelParams, Polynomial};
    use crate::transport::Encoding;
    use rand::{Rng, SeedableRng};

    fn model() -> CameraModel {
        CameraModel::new(CameraModelParams {
            camera_id: "cam0".into(),
            depth: Polynomial::new(vec![8.0, -0.02, 1e-5]),
            lateral: Polynomial::new(vec![0.004, 1e-5]),
            principal_col: None,
            image_w: 640,
            image_h: 480,
            world_pos: Point2::new(0.0, 0.0),
            yaw_deg: 0.0,
            valid_rows: (100.0, 400.0),
        })
        .unwrap()
    }

    fn header(ts_us: u64) -> FrameHeader {
        FrameHeader {
            camera_id: "cam0".into(),
            seq: ts_us,
            ts_us,
            width: 640,
            height: 480,
            encoding: Encoding::Kp17,
        }
    }

    #[test]
    fn principal_column_lands_on_forward_ray() {
        let m = model();
        let p = ingest_detection(&m, &header(5), Pixel::new(319.5, 200.0), 0, AnchorSource::Pose).unwrap();
        assert_eq!(p.pos.x, 0.0);
        assert!(p.pos.y > 0.0);
        assert_eq!(p.ts_us, 5);
    }

    #[test]
    fn out_of_range_rows_are_counted() {
        let t = Tracker::new([model()]);
        assert!(t.ingest(&header(1), Pixel::new(300.0, 50.0), 0, AnchorSource::Pose).unwrap().is_none());
        assert_eq!(t.drops().row_out_of_calibration, 1);
        let mut other = header(2);
        other.camera_id = "cam9".into();
        assert!(matches!(
            t.ingest(&other, Pixel::new(300.0, 200.0), 0, AnchorSource::Pose),
            Err(TrackingError::MissingModel(_))
        ));
    }

    #[test]
    fn ingest_matches_formula_oracle() {
        let m = model();
        let t = Tracker::new([m.clone()]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut inputs = 0;
        for i in 0..100 {
            let (u, v) = (rng.random_range(-20.0..660.0), rng.random_range(80.0..420.0));
            inputs += 1;
            let got = t.ingest(&header(i), Pixel::new(u, v), 0, AnchorSource::Pose).unwrap();
            if let Some(p) = got {
                let d = 8.0 - 0.02 * v + 1e-5 * v * v;
                let s = 0.004 + 1e-5 * v;
                let x = (u - 319.5) * s;
                assert!((p.pos.x - x).abs() < 1e-12 && (p.pos.y - d).abs() < 1e-12);
            }
        }
        assert_eq!(t.point_count() as u64 + t.drops().total(), inputs);
        assert_eq!(t.latest(0).map(|p| p.ts_us).is_some(), t.point_count() > 0);
    }

    #[test]
    fn fps_examples() {
        let ts: Vec<u64> = (0..31).map(|i| i * 10_000_000 / 30).collect();
        assert!((fps_stats(&ts).unwrap().fps - 3.0).abs() < 1e-12);
        let ts: Vec<u64> = (0..40).map(|i| i * 325_000).collect();
        let f = fps_stats(&ts).unwrap().fps;
        assert!((f - 1.0 / 0.325).abs() < 1e-12 && (2.6..=3.45).contains(&f));
        assert!(fps_stats(&[1]).is_err());
        assert!(fps_stats(&[5, 5]).is_err());
    }

    #[test]
    fn fps_matches_recomputation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut t = 0u64;
        let ts: Vec<u64> = (0..200)
            .map(|_| {
                t += rng.random_range(250_000..400_000);
                t
            })
            .collect();
        let expected = 199.0 / ((ts[199] - ts[0]) as f64 * 1e-6);
        assert!((fps_stats(&ts).unwrap().fps - expected).abs() < 1e-12);
    }

    #[test]
    fn push_rejects_time_travel() {
        let mut tr = Track::new();
        let p = |ts| TrackPoint {
            ts_us: ts,
            pos: Point2::default(),
            camera_id: "a".into(),
            person_tag: 0,
            source: AnchorSource::Pose,
        };
        tr.push(p(5)).unwrap();
        tr.push(p(5)).unwrap();
        assert!(tr.push(p(4)).is_err());
    }
}
