//! Ground-plane camera model: image row to ground distance, row-dependent
//! lateral scale, and the rigid 2D placement of each camera in the world frame.
//!
//! A pixel `(u, v)` maps to camera-frame ground coordinates
//! `(X, D) = ((u - c_u) * s(v), depth(v))`, which are then rotated by the
//! camera yaw and translated by the camera position. Yaw is measured
//! counter-clockwise from world +Y to the camera forward axis, so at zero yaw
//! image-right is world +X.

mod poly;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use poly::{fit_polynomial, residual_rms, FitError, PolyFit, Polynomial};

/// Meters per inch, for calibration objects measured in imperial units.
pub const INCH_M: f64 = 0.0254;

/// Rows sampled across the valid range when checking monotonicity and scale sign.
pub const MONOTONICITY_SAMPLES: usize = 256;

/// Bisection stopping width on the row coordinate.
pub const ROW_TOLERANCE_PX: f64 = 1e-9;

pub const DEFAULT_DEPTH_DEGREE: usize = 3;
pub const DEFAULT_LATERAL_DEGREE: usize = 3;

/// Image coordinates: `u` is the column, `v` the row (growing downward).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Pixel { u, v }
    }
}

/// A position on the ground plane, in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Counter-clockwise rotation about the origin.
    pub fn rotated(&self, angle_rad: f64) -> Point2 {
        let (s, c) = angle_rad.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(a: [f64; 2]) -> Self {
        Point2::new(a[0], a[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("calibration fit: {0}")]
    Fit(#[from] FitError),
    #[error("invalid camera model: {0}")]
    InvalidModel(String),
    #[error("row {v} outside calibrated range [{min}, {max}]")]
    OutOfCalibration { v: f64, min: f64, max: f64 },
    #[error("column {u} outside image width {width}")]
    ColumnOutOfRange { u: f64, width: u32 },
    #[error("camera model depth curve is not monotone over its valid rows")]
    UnsupportedModel,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One calibration observation at a known ground distance.
///
/// Widths are stored in meters; use [`CalibrationSample::with_width_inches`]
/// when the object was measured in inches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub row_px: f64,
    pub depth_m: f64,
    #[serde(default)]
    pub object_width_px: Option<f64>,
    #[serde(default)]
    pub object_width_m: Option<f64>,
}

impl CalibrationSample {
    pub fn depth_only(row_px: f64, depth_m: f64) -> Self {
        CalibrationSample {
            row_px,
            depth_m,
            object_width_px: None,
            object_width_m: None,
        }
    }

    pub fn with_width(row_px: f64, depth_m: f64, width_px: f64, width_m: f64) -> Self {
        CalibrationSample {
            row_px,
            depth_m,
            object_width_px: Some(width_px),
            object_width_m: Some(width_m),
        }
    }

    pub fn with_width_inches(row_px: f64, depth_m: f64, width_px: f64, width_in: f64) -> Self {
        Self::with_width(row_px, depth_m, width_px, width_in * INCH_M)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        if !(self.row_px.is_finite() && self.row_px >= 0.0) {
            return Err(GeometryError::Calibration(format!(
                "row {} is not a valid pixel row",
                self.row_px
            )));
        }
        if !(self.depth_m.is_finite() && self.depth_m > 0.0) {
            return Err(GeometryError::Calibration(format!(
                "depth {} at row {} must be positive",
                self.depth_m, self.row_px
            )));
        }
        for w in [self.object_width_px, self.object_width_m].into_iter().flatten() {
            if !(w.is_finite() && w > 0.0) {
                return Err(GeometryError::Calibration(format!(
                    "object width {} at row {} must be positive",
                    w, self.row_px
                )));
            }
        }
        Ok(())
    }
}

/// Reads calibration samples from CSV with header
/// `row_px,depth_m,object_width_px,object_width_m` (the width columns may be empty).
pub fn read_calibration_csv(path: impl AsRef<Path>) -> Result<Vec<CalibrationSample>, GeometryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let s: CalibrationSample = rec?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CalibrationWarning {
    /// The fitted depth curve changes direction somewhere within the sampled rows.
    NonMonotoneDepth,
}

/// A fitted calibration curve with its residual and any diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveFit {
    pub poly: Polynomial,
    pub rms: f64,
    pub row_range: (f64, f64),
    pub warnings: Vec<CalibrationWarning>,
}

fn row_span(rows: &[f64]) -> (f64, f64) {
    rows.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
}

/// Least-squares fit of ground distance as a polynomial in the image row.
pub fn fit_depth_model(samples: &[CalibrationSample], degree: usize) -> Result<CurveFit, GeometryError> {
    for s in samples {
        s.validate()?;
    }
    let rows: Vec<f64> = samples.iter().map(|s| s.row_px).collect();
    let depths: Vec<f64> = samples.iter().map(|s| s.depth_m).collect();
    let fit = fit_polynomial(&rows, &depths, degree)?;
    let row_range = row_span(&rows);
    let mut warnings = Vec::new();
    if depth_trend(&fit.poly, row_range) == DepthTrend::NonMonotone {
        log::warn!("fitted depth curve is not monotone over rows {:?}", row_range);
        warnings.push(CalibrationWarning::NonMonotoneDepth);
    }
    Ok(CurveFit {
        poly: fit.poly,
        rms: fit.rms,
        row_range,
        warnings,
    })
}

/// Least-squares fit of the lateral scale `s(v) = W_m / W_px(v)` (meters per pixel).
///
/// Every sample must carry both widths.
pub fn fit_lateral_model(samples: &[CalibrationSample], degree: usize) -> Result<CurveFit, GeometryError> {
    let mut rows = Vec::with_capacity(samples.len());
    let mut scales = Vec::with_capacity(samples.len());
    for s in samples {
        match (s.object_width_px, s.object_width_m) {
            (Some(px), Some(_)) if px == 0.0 => {
                return Err(GeometryError::Calibration(format!(
                    "zero pixel width at row {}",
                    s.row_px
                )))
            }
            (Some(px), Some(m)) => {
                s.validate()?;
                rows.push(s.row_px);
                scales.push(m / px);
            }
            _ => {
                return Err(GeometryError::Calibration(format!(
                    "sample at row {} lacks object widths",
                    s.row_px
                )))
            }
        }
    }
    let fit = fit_polynomial(&rows, &scales, degree)?;
    Ok(CurveFit {
        poly: fit.poly,
        rms: fit.rms,
        row_range: row_span(&rows),
        warnings: Vec::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthTrend {
    Increasing,
    Decreasing,
    NonMonotone,
}

fn sample_rows(range: (f64, f64)) -> impl Iterator<Item = f64> {
    let (lo, hi) = range;
    let n = MONOTONICITY_SAMPLES;
    (0..n).map(move |i| {
        if i + 1 == n {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

fn depth_trend(poly: &Polynomial, range: (f64, f64)) -> DepthTrend {
    let vals: Vec<f64> = sample_rows(range).map(|v| poly.eval(v)).collect();
    if vals.windows(2).all(|w| w[1] > w[0]) {
        DepthTrend::Increasing
    } else if vals.windows(2).all(|w| w[1] < w[0]) {
        DepthTrend::Decreasing
    } else {
        DepthTrend::NonMonotone
    }
}

/// On-disk camera model (JSON, `"version": 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModelFile {
    pub version: u32,
    pub camera_id: String,
    pub image_w: u32,
    pub image_h: u32,
    pub principal_col: f64,
    pub depth_coeffs: Vec<f64>,
    pub lateral_coeffs: Vec<f64>,
    pub world_pos: [f64; 2],
    pub yaw_deg: f64,
    pub valid_row_range: [f64; 2],
}

/// Immutable per-camera pixel/world mapping.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    camera_id: String,
    depth: Polynomial,
    lateral: Polynomial,
    principal_col: f64,
    image_w: u32,
    image_h: u32,
    world_pos: Point2,
    yaw_deg: f64,
    valid_rows: (f64, f64),
    trend: DepthTrend,
    depth_range: (f64, f64),
}

/// Inputs for [`CameraModel::new`]; `principal_col` defaults to the image center column.
#[derive(Clone, Debug)]
pub struct CameraModelParams {
    pub camera_id: String,
    pub depth: Polynomial,
    pub lateral: Polynomial,
    pub principal_col: Option<f64>,
    pub image_w: u32,
    pub image_h: u32,
    pub world_pos: Point2,
    pub yaw_deg: f64,
    pub valid_rows: (f64, f64),
}

impl CameraModel {
    pub fn new(p: CameraModelParams) -> Result<Self, GeometryError> {
        let invalid = |m: String| Err(GeometryError::InvalidModel(m));
        if p.image_w == 0 || p.image_h == 0 {
            return invalid(format!("image size {}x{}", p.image_w, p.image_h));
        }
        if p.camera_id.is_empty() || p.camera_id.len() > 64 {
            return invalid("camera id must be 1..=64 bytes".into());
        }
        if p.depth.coeffs().is_empty() || p.lateral.coeffs().is_empty() {
            return invalid("empty polynomial".into());
        }
        if p.depth.coeffs().iter().chain(p.lateral.coeffs()).any(|c| !c.is_finite()) {
            return invalid("non-finite coefficient".into());
        }
        let (v_min, v_max) = p.valid_rows;
        if !(v_min.is_finite() && v_max.is_finite() && 0.0 <= v_min && v_min <= v_max && v_max < p.image_h as f64) {
            return invalid(format!(
                "valid row range [{v_min}, {v_max}] not inside image height {}",
                p.image_h
            ));
        }
        if !(p.world_pos.is_finite() && p.yaw_deg.is_finite()) {
            return invalid("non-finite pose".into());
        }
        let principal_col = p.principal_col.unwrap_or((p.image_w as f64 - 1.0) / 2.0);
        if !principal_col.is_finite() {
            return invalid("non-finite principal column".into());
        }
        if sample_rows(p.valid_rows).any(|v| !(p.lateral.eval(v) > 0.0)) {
            return invalid("lateral scale must be positive over the valid rows".into());
        }
        let trend = depth_trend(&p.depth, p.valid_rows);
        let (d0, d1) = (p.depth.eval(v_min), p.depth.eval(v_max));
        Ok(CameraModel {
            camera_id: p.camera_id,
            depth: p.depth,
            lateral: p.lateral,
            principal_col,
            image_w: p.image_w,
            image_h: p.image_h,
            world_pos: p.world_pos,
            yaw_deg: p.yaw_deg,
            valid_rows: p.valid_rows,
            trend,
            depth_range: (d0.min(d1), d0.max(d1)),
        })
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }
    pub fn depth_poly(&self) -> &Polynomial {
        &self.depth
    }
    pub fn lateral_poly(&self) -> &Polynomial {
        &self.lateral
    }
    pub fn principal_col(&self) -> f64 {
        self.principal_col
    }
    pub fn image_size(&self) -> (u32, u32) {
        (self.image_w, self.image_h)
    }
    pub fn world_pos(&self) -> Point2 {
        self.world_pos
    }
    pub fn yaw_deg(&self) -> f64 {
        self.yaw_deg
    }
    pub fn valid_rows(&self) -> (f64, f64) {
        self.valid_rows
    }
    pub fn depth_trend(&self) -> DepthTrend {
        self.trend
    }
    /// Minimum and maximum ground distance covered by the valid rows.
    pub fn depth_range(&self) -> (f64, f64) {
        self.depth_range
    }
    pub fn is_invertible(&self) -> bool {
        self.trend != DepthTrend::NonMonotone
    }

    /// Camera-frame ground coordinates `(X, D)` of a pixel, without range checks.
    pub fn camera_frame(&self, px: Pixel) -> Point2 {
        Point2::new((px.u - self.principal_col) * self.lateral.eval(px.v), self.depth.eval(px.v))
    }

    pub fn pixel_to_world(&self, px: Pixel) -> Result<Point2, GeometryError> {
        let (v_min, v_max) = self.valid_rows;
        if !(px.v >= v_min && px.v <= v_max) {
            return Err(GeometryError::OutOfCalibration {
                v: px.v,
                min: v_min,
                max: v_max,
            });
        }
        if !(px.u >= 0.0 && px.u < self.image_w as f64) {
            return Err(GeometryError::ColumnOutOfRange {
                u: px.u,
                width: self.image_w,
            });
        }
        Ok(self.world_pos + self.camera_frame(px).rotated(self.yaw_deg.to_radians()))
    }

    /// Inverse of [`pixel_to_world`](Self::pixel_to_world). `Ok(None)` means the
    /// point is not visible: behind the camera, outside the calibrated depth
    /// band, or outside the image columns.
    pub fn world_to_pixel(&self, p: Point2) -> Result<Option<Pixel>, GeometryError> {
        if !self.is_invertible() {
            return Err(GeometryError::UnsupportedModel);
        }
        let cam = (p - self.world_pos).rotated(-self.yaw_deg.to_radians());
        let (lateral, depth) = (cam.x, cam.y);
        let (d_lo, d_hi) = self.depth_range;
        if !(depth > 0.0 && depth >= d_lo && depth <= d_hi) {
            return Ok(None);
        }
        let v = self.solve_row(depth);
        let u = self.principal_col + lateral / self.lateral.eval(v);
        if !(u >= 0.0 && u < self.image_w as f64) {
            return Ok(None);
        }
        Ok(Some(Pixel::new(u, v)))
    }

    /// Bisection for `depth(v) = target` on the valid rows; assumes monotone depth.
    fn solve_row(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = self.valid_rows;
        let increasing = self.trend == DepthTrend::Increasing;
        for _ in 0..200 {
            if hi - lo <= ROW_TOLERANCE_PX {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let below = self.depth.eval(mid) < target;
            if below == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn to_file(&self) -> CameraModelFile {
        CameraModelFile {
            version: 1,
            camera_id: self.camera_id.clone(),
            image_w: self.image_w,
            image_h: self.image_h,
            principal_col: self.principal_col,
            depth_coeffs: self.depth.coeffs().to_vec(),
            lateral_coeffs: self.lateral.coeffs().to_vec(),
            world_pos: self.world_pos.into(),
            yaw_deg: self.yaw_deg,
            valid_row_range: [self.valid_rows.0, self.valid_rows.1],
        }
    }

    pub fn from_file(f: CameraModelFile) -> Result<Self, GeometryError> {
        if f.version != 1 {
            return Err(GeometryError::InvalidModel(format!("unsupported version {}", f.version)));
        }
        CameraModel::new(CameraModelParams {
            camera_id: f.camera_id,
            depth: Polynomial::new(f.depth_coeffs),
            lateral: Polynomial::new(f.lateral_coeffs),
            principal_col: Some(f.principal_col),
            image_w: f.image_w,
            image_h: f.image_h,
            world_pos: f.world_pos.into(),
            yaw_deg: f.yaw_deg,
            valid_rows: (f.valid_row_range[0], f.valid_row_range[1]),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        let json = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

impl Serialize for CameraModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = CameraModelFile::deserialize(d)?;
        CameraModel::from_file(f).map_err(serde::de::Error::custom)
    }
}

/// Placement and image geometry for [`calibrate_camera`].
#[derive(Clone, Debug)]
pub struct CameraPlacement {
    pub camera_id: String,
    pub image_w: u32,
    pub image_h: u32,
    pub principal_col: Option<f64>,
    pub world_pos: Point2,
    pub yaw_deg: f64,
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub model: CameraModel,
    pub depth: CurveFit,
    pub lateral: CurveFit,
}

/// Fits both curves and assembles a camera model whose valid rows are the
/// overlap of the depth and lateral sample spans.
pub fn calibrate_camera(
    samples: &[CalibrationSample],
    placement: CameraPlacement,
    depth_degree: usize,
    lateral_degree: usize,
) -> Result<Calibration, GeometryError> {
    let depth = fit_depth_model(samples, depth_degree)?;
    let with_widths: Vec<CalibrationSample> = samples
        .iter()
        .filter(|s| s.object_width_px.is_some() && s.object_width_m.is_some())
        .copied()
        .collect();
    let lateral = fit_lateral_model(&with_widths, lateral_degree)?;
    let lo = depth.row_range.0.max(lateral.row_range.0);
    let hi = depth.row_range.1.min(lateral.row_range.1);
    if lo > hi {
        return Err(GeometryError::Calibration(
            "depth and width samples cover disjoint rows".into(),
        ));
    }
    let model = CameraModel::new(CameraModelParams {
        camera_id: placement.camera_id,
        depth: depth.poly.clone(),
        lateral: lateral.poly.clone(),
        principal_col: placement.principal_col,
        image_w: placement.image_w,
        image_h: placement.image_h,
        world_pos: placement.world_pos,
        yaw_deg: placement.yaw_deg,
        valid_rows: (lo, hi),
    })?;
    Ok(Calibration { model, depth, lateral })
}
