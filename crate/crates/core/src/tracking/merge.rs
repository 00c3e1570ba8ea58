use serde::{Deserialize, Serialize};

use super::{Track, TrackPoint};
use crate::geometry::Point2;

/// Points from different cameras closer than this are fused in window-average mode.
pub const MERGE_WINDOW_US: u64 = 150_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeMode {
    /// Union of all camera tracks ordered by time.
    #[default]
    Concat,
    /// Union, with near-simultaneous points from different cameras replaced by their centroid.
    WindowAverage,
}

impl std::str::FromStr for MergeMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "concat" => Ok(MergeMode::Concat),
            "window-average" => Ok(MergeMode::WindowAverage),
            other => Err(format!("unknown merge mode {other:?}")),
        }
    }
}

pub fn merge_camera_tracks(tracks: &[Track], mode: MergeMode) -> Track {
    let union = Track::from_points(tracks.iter().flat_map(|t| t.points().iter().cloned()).collect());
    match mode {
        MergeMode::Concat => union,
        MergeMode::WindowAverage => window_average(union.into_points()),
    }
}

/// Greedy clustering in time order: each unclaimed point opens a window of
/// [`MERGE_WINDOW_US`] and claims at most one later point per other camera.
fn window_average(points: Vec<TrackPoint>) -> Track {
    let mut used = vec![false; points.len()];
    let mut out = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let anchor = &points[i];
        let mut members = vec![i];
        for j in i + 1..points.len() {
            if points[j].ts_us - anchor.ts_us > MERGE_WINDOW_US {
                break;
            }
            let cam = &points[j].camera_id;
            if !used[j] && members.iter().all(|&m| &points[m].camera_id != cam) {
                used[j] = true;
                members.push(j);
            }
        }
        if members.len() == 1 {
            out.push(anchor.clone());
            continue;
        }
        let n = members.len() as f64;
        let (sx, sy) = members
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &m| (sx + points[m].pos.x, sy + points[m].pos.y));
        let mut cams: Vec<&str> = members.iter().map(|&m| points[m].camera_id.as_str()).collect();
        cams.sort_unstable();
        out.push(TrackPoint {
            ts_us: anchor.ts_us,
            pos: Point2::new(sx / n, sy / n),
            camera_id: cams.join("+"),
            person_tag: anchor.person_tag,
            source: anchor.source,
        });
    }
    Track::from_sorted_unchecked(out)
}
