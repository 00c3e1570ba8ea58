use super::Track;

/// Fence multiplier for the interquartile-range outlier rule.
pub const IQR_FENCE: f64 = 1.5;

/// Quantile of sorted data by linear interpolation at position `p (n - 1)`.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `[Q1 - k IQR, Q3 + k IQR]` of the values.
pub fn iqr_bounds(values: &[f64], fence: f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_linear(&sorted, 0.25);
    let q3 = quantile_linear(&sorted, 0.75);
    let iqr = q3 - q1;
    (q1 - fence * iqr, q3 + fence * iqr)
}

/// Drops points whose x or y falls outside the 1.5 IQR fences of that axis,
/// computed once over the whole track. Tracks shorter than four points are
/// returned unchanged.
pub fn iqr_filter(track: &Track) -> Track {
    iqr_filter_with(track, IQR_FENCE)
}

pub fn iqr_filter_with(track: &Track, fence: f64) -> Track {
    let pts = track.points();
    if pts.len() < 4 {
        return track.clone();
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.pos.x).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.pos.y).collect();
    let (x_lo, x_hi) = iqr_bounds(&xs, fence);
    let (y_lo, y_hi) = iqr_bounds(&ys, fence);
    let kept = pts
        .iter()
        .filter(|p| p.pos.x >= x_lo && p.pos.x <= x_hi && p.pos.y >= y_lo && p.pos.y <= y_hi)
        .cloned()
        .collect();
    Track::from_sorted_unchecked(kept)
}
