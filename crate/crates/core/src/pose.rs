//! COCO-17 keypoint detections, ground-contact anchor selection, and the
//! `kp17` payload codec.
//!
//! kp17 layout (little-endian): `u16` person count `n`, then `n` records of
//! 17 × (`f32` x, `f32` y, `f32` conf) in COCO-17 order.

use serde::{Deserialize, Serialize};

use crate::geometry::Pixel;

pub const NUM_KEYPOINTS: usize = 17;
pub const LEFT_ANKLE: usize = 15;
pub const RIGHT_ANKLE: usize = 16;
pub const DEFAULT_CONF_THRESHOLD: f32 = 0.3;

const RECORD_BYTES: usize = NUM_KEYPOINTS * 12;

/// COCO-17 keypoint names in index order.
pub const COCO17_NAMES: [&str; NUM_KEYPOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoseError {
    #[error("malformed kp17 payload: {0}")]
    MalformedPayload(String),
    #[error("too many detections for kp17: {0}")]
    TooManyDetections(usize),
    #[error("invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub conf: f32,
}

impl Keypoint {
    pub const fn new(x: f32, y: f32, conf: f32) -> Self {
        Keypoint { x, y, conf }
    }

    fn pixel(&self) -> Pixel {
        Pixel::new(self.x as f64, self.y as f64)
    }
}

/// One person's keypoints in a frame. `person_tag` is the detection's index
/// within the frame; it is not carried on the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseDetection {
    pub keypoints: [Keypoint; NUM_KEYPOINTS],
    pub person_tag: u16,
}

impl PoseDetection {
    pub fn new(keypoints: [Keypoint; NUM_KEYPOINTS], person_tag: u16) -> Self {
        PoseDetection { keypoints, person_tag }
    }

    pub fn left_ankle(&self) -> &Keypoint {
        &self.keypoints[LEFT_ANKLE]
    }

    pub fn right_ankle(&self) -> &Keypoint {
        &self.keypoints[RIGHT_ANKLE]
    }
}

/// Which rule produced an anchor pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorKind {
    LeftAnkle,
    RightAnkle,
    AnkleMidpoint,
}

/// Ground-contact pixel of a pose: the left ankle, falling back to the right
/// ankle, then to the midpoint of both ankles when each clears half the threshold.
pub fn anchor_pixel_from_pose(d: &PoseDetection, conf_threshold: f32) -> Option<(Pixel, AnchorKind)> {
    let (left, right) = (d.left_ankle(), d.right_ankle());
    if left.conf >= conf_threshold {
        return Some((left.pixel(), AnchorKind::LeftAnkle));
    }
    if right.conf >= conf_threshold {
        return Some((right.pixel(), AnchorKind::RightAnkle));
    }
    let half = conf_threshold / 2.0;
    if left.conf >= half && right.conf >= half {
        let mid = Pixel::new(
            0.5 * (left.x as f64 + right.x as f64),
            0.5 * (left.y as f64 + right.y as f64),
        );
        return Some((mid, AnchorKind::AnkleMidpoint));
    }
    None
}

/// Axis-aligned box in pixel coordinates with `x_min < x_max` and `y_min < y_max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, PoseError> {
        if x_min < x_max && y_min < y_max {
            Ok(BBox { x_min, y_min, x_max, y_max })
        } else {
            Err(PoseError::InvalidBBox { x_min, y_min, x_max, y_max })
        }
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

/// Bottom-center of the box.
pub fn bbox_to_anchor_pixel(b: &BBox) -> Pixel {
    Pixel::new(0.5 * (b.x_min + b.x_max), b.y_max)
}

pub fn kp17_payload_len(persons: usize) -> usize {
    2 + persons * RECORD_BYTES
}

pub fn encode_kp17(detections: &[PoseDetection]) -> Result<Vec<u8>, PoseError> {
    let n = u16::try_from(detections.len()).map_err(|_| PoseError::TooManyDetections(detections.len()))?;
    let mut out = Vec::with_capacity(kp17_payload_len(detections.len()));
    out.extend_from_slice(&n.to_le_bytes());
    for d in detections {
        for k in &d.keypoints {
            out.extend_from_slice(&k.x.to_le_bytes());
            out.extend_from_slice(&k.y.to_le_bytes());
            out.extend_from_slice(&k.conf.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a kp17 payload. Detections are tagged by their index in the payload.
pub fn decode_kp17(payload: &[u8]) -> Result<Vec<PoseDetection>, PoseError> {
    let Some(count) = payload.get(..2) else {
        return Err(PoseError::MalformedPayload(format!("{} bytes, need a count", payload.len())));
    };
    let n = u16::from_le_bytes([count[0], count[1]]) as usize;
    let expected = kp17_payload_len(n);
    if payload.len() != expected {
        return Err(PoseError::MalformedPayload(format!(
            "{n} persons need {expected} bytes, got {}",
            payload.len()
        )));
    }
    let f32_at = |off: usize| f32::from_le_bytes(payload[off..off + 4].try_into().unwrap());
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let base = 2 + p * RECORD_BYTES;
        let mut keypoints = [Keypoint::default(); NUM_KEYPOINTS];
        for (j, kp) in keypoints.iter_mut().enumerate() {
            let off = base + j * 12;
            *kp = Keypoint::new(f32_at(off), f32_at(off + 4), f32_at(off + 8));
            if !(0.0..=1.0).contains(&kp.conf) {
                return Err(PoseError::MalformedPayload(format!(
                    "person {p} keypoint {j} confidence {} outside [0, 1]",
                    kp.conf
                )));
            }
        }
        out.push(PoseDetection::new(keypoints, p as u16));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose_with_ankles(left: Keypoint, right: Keypoint) -> PoseDetection {
        let mut kps = [Keypoint::new(0.0, 0.0, 0.5); NUM_KEYPOINTS];
        kps[LEFT_ANKLE] = left;
        kps[RIGHT_ANKLE] = right;
        PoseDetection::new(kps, 0)
    }

    #[test]
    fn left_ankle_preferred() {
        let d = pose_with_ankles(Keypoint::new(320.0, 400.0, 0.9), Keypoint::new(1.0, 1.0, 0.95));
        assert_eq!(
            anchor_pixel_from_pose(&d, 0.5),
            Some((Pixel::new(320.0, 400.0), AnchorKind::LeftAnkle))
        );
    }

    #[test]
    fn right_ankle_fallback() {
        let d = pose_with_ankles(Keypoint::new(320.0, 400.0, 0.1), Keypoint::new(300.0, 398.0, 0.8));
        assert_eq!(
            anchor_pixel_from_pose(&d, 0.5),
            Some((Pixel::new(300.0, 398.0), AnchorKind::RightAnkle))
        );
    }

    #[test]
    fn midpoint_fallback_and_none() {
        let d = pose_with_ankles(Keypoint::new(300.0, 400.0, 0.3), Keypoint::new(310.0, 404.0, 0.26));
        assert_eq!(
            anchor_pixel_from_pose(&d, 0.5),
            Some((Pixel::new(305.0, 402.0), AnchorKind::AnkleMidpoint))
        );
        let d = pose_with_ankles(Keypoint::new(320.0, 400.0, 0.1), Keypoint::new(300.0, 398.0, 0.1));
        assert_eq!(anchor_pixel_from_pose(&d, 0.5), None);
    }

    #[test]
    fn bbox_bottom_center() {
        assert_eq!(bbox_to_anchor_pixel(&BBox::new(0.0, 0.0, 10.0, 10.0).unwrap()), Pixel::new(5.0, 10.0));
        assert_eq!(
            bbox_to_anchor_pixel(&BBox::new(100.0, 50.0, 140.0, 250.0).unwrap()),
            Pixel::new(120.0, 250.0)
        );
        assert!(BBox::new(10.0, 0.0, 10.0, 5.0).is_err());
        assert!(BBox::new(0.0, 5.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn empty_payload() {
        let bytes = encode_kp17(&[]).unwrap();
        assert_eq!(bytes, vec![0, 0]);
        assert!(decode_kp17(&bytes).unwrap().is_empty());
    }

    #[test]
    fn single_detection_length() {
        let d = PoseDetection::new([Keypoint::new(1.5, 2.5, 1.0); NUM_KEYPOINTS], 0);
        let bytes = encode_kp17(std::slice::from_ref(&d)).unwrap();
        assert_eq!(bytes.len(), 206);
        assert_eq!(decode_kp17(&bytes).unwrap(), vec![d]);
    }

    #[test]
    fn decode_rejects_bad_lengths() {
        let d = PoseDetection::new([Keypoint::new(1.5, 2.5, 1.0); NUM_KEYPOINTS], 0);
        let mut bytes = encode_kp17(&[d]).unwrap();
        assert!(decode_kp17(&bytes[..205]).is_err());
        bytes.push(0);
        assert!(decode_kp17(&bytes).is_err());
        assert!(decode_kp17(&[1]).is_err());
    }

    fn arb_detection() -> impl Strategy<Value = [Keypoint; NUM_KEYPOINTS]> {
        proptest::array::uniform17((-1e4f32..1e4, -1e4f32..1e4, 0f32..=1.0).prop_map(|(x, y, c)| Keypoint::new(x, y, c)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn kp17_round_trip(kps in proptest::collection::vec(arb_detection(), 0..4)) {
            let dets: Vec<_> = kps.into_iter().enumerate().map(|(i, k)| PoseDetection::new(k, i as u16)).collect();
            let bytes = encode_kp17(&dets).unwrap();
            prop_assert_eq!(bytes.len(), kp17_payload_len(dets.len()));
            prop_assert_eq!(decode_kp17(&bytes).unwrap(), dets);
        }

        #[test]
        fn anchor_respects_threshold(l in 0f32..=1.0, r in 0f32..=1.0, t in 0f32..=1.0) {
            let d = pose_with_ankles(Keypoint::new(1.0, 2.0, l), Keypoint::new(3.0, 4.0, r));
            match anchor_pixel_from_pose(&d, t) {
                Some((_, AnchorKind::LeftAnkle)) => prop_assert!(l >= t),
                Some((_, AnchorKind::RightAnkle)) => prop_assert!(r >= t),
                Some((_, AnchorKind::AnkleMidpoint)) => prop_assert!(l >= t / 2.0 && r >= t / 2.0),
                None => prop_assert!(l < t && r < t && (l < t / 2.0 || r < t / 2.0)),
            }
        }
    }
}
