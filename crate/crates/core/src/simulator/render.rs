use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::trajectory::TruthSample;
use super::SimError;
use crate::geometry::CameraModel;
use crate::pose::{encode_kp17, Keypoint, PoseDetection, LEFT_ANKLE, NUM_KEYPOINTS, RIGHT_ANKLE};
use crate::transport::{Encoding, FrameHeader, FrameMessage};

pub const ANKLE_CONF: f32 = 0.95;
pub const BODY_CONF: f32 = 0.5;

/// Pixel offsets of the non-ankle keypoints above the ankle anchor, in COCO-17
/// order (ankle slots are unused).
const BODY_TEMPLATE: [(f32, f32); NUM_KEYPOINTS] = [
    (0.0, -160.0),
    (-4.0, -166.0),
    (4.0, -166.0),
    (-9.0, -163.0),
    (9.0, -163.0),
    (-18.0, -135.0),
    (18.0, -135.0),
    (-24.0, -105.0),
    (24.0, -105.0),
    (-26.0, -78.0),
    (26.0, -78.0),
    (-11.0, -80.0),
    (11.0, -80.0),
    (-10.0, -40.0),
    (10.0, -40.0),
    (0.0, 0.0),
    (0.0, 0.0),
];

/// Detections one camera sees of one subject at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    pub ts_us: u64,
    pub detections: Vec<PoseDetection>,
}

impl RenderedFrame {
    pub fn to_message(&self, camera: &CameraModel, seq: u64) -> Result<FrameMessage, SimError> {
        let (w, h) = camera.image_size();
        let payload = encode_kp17(&self.detections)?;
        let header = FrameHeader {
            camera_id: camera.camera_id().to_string(),
            seq,
            ts_us: self.ts_us,
            width: w,
            height: h,
            encoding: Encoding::Kp17,
        };
        Ok(FrameMessage::new(header, payload)?)
    }
}

fn body(anchor_u: f32, anchor_v: f32, ankle_l: (f32, f32), ankle_r: (f32, f32)) -> PoseDetection {
    let mut kps = [Keypoint::new(0.0, 0.0, 0.0); NUM_KEYPOINTS];
    for (k, (du, dv)) in BODY_TEMPLATE.iter().enumerate() {
        kps[k] = Keypoint::new(anchor_u + du, anchor_v + dv, BODY_CONF);
    }
    kps[LEFT_ANKLE] = Keypoint::new(ankle_l.0, ankle_l.1, ANKLE_CONF);
    kps[RIGHT_ANKLE] = Keypoint::new(ankle_r.0, ankle_r.1, ANKLE_CONF);
    PoseDetection::new(kps, 0)
}

/// Synthetic detector: one detection per visible instant, with both ankles
/// at the projected position plus independent Gaussian pixel noise.
pub fn render_keypoints<R: Rng>(
    track: &[TruthSample],
    camera: &CameraModel,
    sigma_px: f64,
    rng: &mut R,
) -> Result<Vec<RenderedFrame>, SimError> {
    if !camera.is_invertible() {
        return Err(crate::geometry::GeometryError::UnsupportedModel.into());
    }
    let noise = Normal::new(0.0, sigma_px).map_err(|e| SimError::Config(format!("pixel noise: {e}")))?;
    let mut out = Vec::with_capacity(track.len());
    for s in track {
        let mut detections = Vec::new();
        if let Some(px) = camera.world_to_pixel(s.pos)? {
            let mut jitter = || {
                if sigma_px > 0.0 {
                    (noise.sample(rng), noise.sample(rng))
                } else {
                    (0.0, 0.0)
                }
            };
            let (lu, lv) = jitter();
            let (ru, rv) = jitter();
            detections.push(body(
                px.u as f32,
                px.v as f32,
                ((px.u + lu) as f32, (px.v + lv) as f32),
                ((px.u + ru) as f32, (px.v + rv) as f32),
            ));
        }
        out.push(RenderedFrame {
            ts_us: s.ts_us,
            detections,
        });
    }
    Ok(out)
}
