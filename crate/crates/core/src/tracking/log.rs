use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnchorSource, Track, TrackPoint, TrackingError};
use crate::geometry::Point2;

pub const TRACK_LOG_HEADER: &str = "trial,camera_id,ts_us,person_tag,x_m,y_m,source";

/// One row of the track log CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackLogRow {
    pub trial: String,
    pub camera_id: String,
    pub ts_us: u64,
    pub person_tag: u16,
    pub x_m: f64,
    pub y_m: f64,
    pub source: AnchorSource,
}

impl TrackLogRow {
    pub fn new(trial: &str, p: &TrackPoint) -> Self {
        TrackLogRow {
            trial: trial.to_string(),
            camera_id: p.camera_id.clone(),
            ts_us: p.ts_us,
            person_tag: p.person_tag,
            x_m: p.pos.x,
            y_m: p.pos.y,
            source: p.source,
        }
    }

    pub fn to_point(&self) -> TrackPoint {
        TrackPoint {
            ts_us: self.ts_us,
            pos: Point2::new(self.x_m, self.y_m),
            camera_id: self.camera_id.clone(),
            person_tag: self.person_tag,
            source: self.source,
        }
    }
}

/// Incremental track log. Rows go to `<path>.partial` and are flushed as they
/// are written; [`finalize`](Self::finalize) renames the file into place.
pub struct TrackLogWriter {
    trial: String,
    writer: csv::Writer<BufWriter<File>>,
    partial: PathBuf,
    target: PathBuf,
    rows: usize,
}

impl TrackLogWriter {
    pub fn create(path: impl AsRef<Path>, trial: &str) -> Result<Self, TrackingError> {
        let target = path.as_ref().to_path_buf();
        let mut partial = target.clone().into_os_string();
        partial.push(".partial");
        let partial = PathBuf::from(partial);
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(File::create(&partial)?));
        writer.write_record(TRACK_LOG_HEADER.split(','))?;
        writer.flush()?;
        Ok(TrackLogWriter {
            trial: trial.to_string(),
            writer,
            partial,
            target,
            rows: 0,
        })
    }

    pub fn append(&mut self, p: &TrackPoint) -> Result<(), TrackingError> {
        self.writer.serialize(TrackLogRow::new(&self.trial, p))?;
        self.rows += 1;
        Ok(())
    }

    /// Pushes buffered rows to the file.
    pub fn flush(&mut self) -> Result<(), TrackingError> {
        self.writer.flush()?;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finalize(mut self) -> Result<PathBuf, TrackingError> {
        self.writer.flush()?;
        let file = self
            .writer
            .into_inner()
            .map_err(|e| TrackingError::Io(e.into_error()))?
            .into_inner()
            .map_err(|e| TrackingError::Io(e.into_error()))?;
        file.sync_all()?;
        drop(file);
        std::fs::rename(&self.partial, &self.target)?;
        Ok(self.target)
    }
}

pub fn read_track_csv(path: impl AsRef<Path>) -> Result<Vec<TrackLogRow>, TrackingError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

/// Writes a whole track in one go (used for derived tracks such as filtered output).
pub fn write_track_csv(path: impl AsRef<Path>, trial: &str, track: &Track) -> Result<(), TrackingError> {
    let mut w = TrackLogWriter::create(path, trial)?;
    for p in track.points() {
        w.append(p)?;
    }
    w.finalize()?;
    Ok(())
}
