use gridtrack::geometry::Point2;
use gridtrack::tracking::{
    fps_stats, iqr_filter, merge_camera_tracks, AnchorSource, MergeMode, Track, TrackPoint, MERGE_WINDOW_US,
};
use proptest::prelude::*;

fn pt(ts_us: u64, x: f64, y: f64, cam: &str) -> TrackPoint {
    TrackPoint {
        ts_us,
        pos: Point2::new(x, y),
        camera_id: cam.into(),
        person_tag: 0,
        source: AnchorSource::Pose,
    }
}

/// Quartiles from the sorted sample by direct linear interpolation at `p (n - 1)`.
fn fences(mut v: Vec<f64>) -> (f64, f64) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let i = h as usize;
        if i + 1 >= v.len() {
            v[i]
        } else {
            v[i] + (h - i as f64) * (v[i + 1] - v[i])
        }
    };
    let (q1, q3) = (q(0.25), q(0.75));
    (q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1))
}

fn series() -> impl Strategy<Value = Vec<(u64, f64, f64)>> {
    prop::collection::vec((0u64..10_000_000, -50.0f64..50.0, -50.0f64..50.0), 0..60)
}

proptest! {
    #[test]
    fn iqr_keeps_an_in_order_subsequence_inside_the_fences(raw in series()) {
        let track = Track::from_points(raw.iter().map(|&(t, x, y)| pt(t, x, y, "c")).collect());
        let kept = iqr_filter(&track);
        // subsequence of the input
        let mut it = track.points().iter();
        for p in kept.points() {
            prop_assert!(it.any(|q| q == p));
        }
        if track.len() >= 4 {
            let (xl, xh) = fences(raw.iter().map(|r| r.1).collect());
            let (yl, yh) = fences(raw.iter().map(|r| r.2).collect());
            let want = track
                .points()
                .iter()
                .filter(|p| p.pos.x >= xl && p.pos.x <= xh && p.pos.y >= yl && p.pos.y <= yh)
                .count();
            prop_assert_eq!(kept.len(), want);
        } else {
            prop_assert_eq!(&kept, &track);
        }
        // idempotent on data with no spread in the fences
        prop_assert!(kept.len() <= track.len());
    }

    #[test]
    fn concat_is_a_sorted_union(a in series(), b in series()) {
        let ta = Track::from_points(a.iter().map(|&(t, x, y)| pt(t, x, y, "cam0")).collect());
        let tb = Track::from_points(b.iter().map(|&(t, x, y)| pt(t, x, y, "cam1")).collect());
        let m = merge_camera_tracks(&[ta.clone(), tb.clone()], MergeMode::Concat);
        prop_assert_eq!(m.len(), ta.len() + tb.len());
        prop_assert!(m.timestamps().windows(2).all(|w| w[0] <= w[1]));
        for cam in ["cam0", "cam1"] {
            let sub: Vec<_> = m.points().iter().filter(|p| p.camera_id == cam).cloned().collect();
            let src = if cam == "cam0" { &ta } else { &tb };
            prop_assert_eq!(sub.len(), src.len());
        }
    }

    #[test]
    fn window_average_never_adds_points_and_stays_in_hull(a in series(), b in series()) {
        let ta = Track::from_points(a.iter().map(|&(t, x, y)| pt(t, x, y, "cam0")).collect());
        let tb = Track::from_points(b.iter().map(|&(t, x, y)| pt(t, x, y, "cam1")).collect());
        let m = merge_camera_tracks(&[ta.clone(), tb.clone()], MergeMode::WindowAverage);
        let n = ta.len() + tb.len();
        prop_assert!(m.len() <= n);
        // two cameras fuse at most pairwise
        prop_assert!(2 * m.len() >= n);
        prop_assert!(m.timestamps().windows(2).all(|w| w[0] <= w[1]));
        for p in m.points() {
            prop_assert!(p.pos.x.abs() <= 50.0 && p.pos.y.abs() <= 50.0);
        }
    }
}

#[test]
fn window_average_fuses_only_inside_the_window() {
    let a = Track::from_points(vec![pt(0, 0.0, 0.0, "cam0"), pt(1_000_000, 4.0, 0.0, "cam0")]);
    let b = Track::from_points(vec![
        pt(MERGE_WINDOW_US, 2.0, 2.0, "cam1"),
        pt(1_000_000 + MERGE_WINDOW_US + 1, 0.0, 0.0, "cam1"),
    ]);
    let m = merge_camera_tracks(&[a, b], MergeMode::WindowAverage);
    let got: Vec<_> = m.points().iter().map(|p| (p.ts_us, p.pos, p.camera_id.as_str())).collect();
    assert_eq!(
        got,
        vec![
            (0, Point2::new(1.0, 1.0), "cam0+cam1"),
            (1_000_000, Point2::new(4.0, 0.0), "cam0"),
            (1_150_001, Point2::new(0.0, 0.0), "cam1"),
        ]
    );
}

#[test]
fn iqr_drops_a_single_far_outlier() {
    let mut pts: Vec<_> = (0..20).map(|k| pt(k * 1000, 1.0 + 0.01 * k as f64, 2.0, "c")).collect();
    pts.push(pt(30_000, 40.0, 2.0, "c"));
    let kept = iqr_filter(&Track::from_points(pts));
    assert_eq!(kept.len(), 20);
    assert!(kept.points().iter().all(|p| p.pos.x < 2.0));
}

#[test]
fn fps_of_evenly_spaced_frames() {
    let ts: Vec<u64> = (0..31).map(|k| k * 300_000).collect();
    let s = fps_stats(&ts).unwrap();
    assert!((s.fps - 1.0 / 0.3).abs() < 1e-12);
    assert_eq!(s.frames, 31);
    assert!(fps_stats(&ts[..1]).is_err());
    assert!(fps_stats(&[5, 5]).is_err());
}
