use serde::{Deserialize, Serialize};

use super::{to_db, Profile1D};
use crate::error::{Error, Result};
use crate::field::ScalarField2D;

pub const DEFAULT_WINDOW_POINTS: usize = 1000;

/// Window means at or below this fraction of the peak are reported as floor-limited when
/// no measured noise floor is supplied.
pub const NUMERICAL_FLOOR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub n_points: usize,
    /// Samples either side of a peak hint searched for a local maximum.
    pub search_steps: usize,
    /// Absolute background level below which a window mean cannot be resolved.
    pub noise_floor: Option<f64>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            n_points: DEFAULT_WINDOW_POINTS,
            search_steps: 3,
            noise_floor: None,
        }
    }
}

/// Crosstalk of a peak into the region between it and its neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkReport {
    /// `10 log10(window mean / peak)`. When floor-limited this is the floor level, an upper
    /// bound; `None` means no signal and no floor.
    pub value_db: Option<f64>,
    /// Standard error of the window mean in dB; `None` when floor-limited.
    pub uncertainty_db: Option<f64>,
    pub peak_position: f64,
    pub peak_height: f64,
    pub other_peak_position: f64,
    pub window: (f64, f64),
    pub n_window_points: usize,
    pub window_mean: f64,
    pub floor_limited: bool,
}

/// Local maximum within `search_steps` samples of `hint`, refined by a parabola through
/// the maximum and its neighbours. Returns `(position, height)`.
pub fn find_peak(profile: &Profile1D, hint: f64, search_steps: usize) -> Result<(f64, f64)> {
    let x = &profile.positions;
    let v = &profile.values;
    let n = x.len();
    let near = x.partition_point(|&p| p < hint).min(n - 1);
    let near = if near > 0 && (hint - x[near - 1]).abs() < (x[near] - hint).abs() {
        near - 1
    } else {
        near
    };
    let lo = near.saturating_sub(search_steps).max(1);
    let hi = (near + search_steps).min(n.saturating_sub(2));
    let best = (lo..=hi)
        .filter(|&k| v[k] >= v[k - 1] && v[k] >= v[k + 1] && v[k] > 0.0)
        .max_by(|&a, &b| v[a].total_cmp(&v[b]))
        .ok_or(Error::PeakNotFound { hint })?;
    let (y0, y1, y2) = (v[best - 1], v[best], v[best + 1]);
    let curv = y0 - 2.0 * y1 + y2;
    if curv >= 0.0 {
        return Ok((x[best], y1));
    }
    let delta = 0.5 * (y0 - y2) / curv;
    let h = if delta >= 0.0 {
        x[best + 1] - x[best]
    } else {
        x[best] - x[best - 1]
    };
    Ok((x[best] + delta * h, y1 - 0.25 * (y0 - y2) * delta))
}

/// Ratio of the mean over `n_points` samples centred between two peaks to the height of
/// the first peak.
pub fn extract_crosstalk(
    profile: &Profile1D,
    peak_a: f64,
    peak_b: f64,
    opts: &ExtractOptions,
) -> Result<CrosstalkReport> {
    profile.validate()?;
    if opts.n_points < 2 {
        return Err(Error::WindowTooSmall {
            available: 0,
            requested: opts.n_points,
        });
    }
    let (pa, ha) = find_peak(profile, peak_a, opts.search_steps)?;
    let (pb, _) = find_peak(profile, peak_b, opts.search_steps)?;
    let (left, right) = (pa.min(pb), pa.max(pb));
    let x = &profile.positions;
    let first = x.partition_point(|&p| p <= left);
    let last = x.partition_point(|&p| p < right);
    let available = last.saturating_sub(first);
    if available < opts.n_points {
        return Err(Error::WindowTooSmall {
            available,
            requested: opts.n_points,
        });
    }
    let mid = 0.5 * (left + right);
    let centre = x.partition_point(|&p| p < mid);
    let start = centre
        .saturating_sub(opts.n_points / 2)
        .clamp(first, last - opts.n_points);
    let window = &profile.values[start..start + opts.n_points];
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();

    let floor = opts.noise_floor.unwrap_or(NUMERICAL_FLOOR_RATIO * ha);
    let floor_limited = mean <= floor;
    let (value_db, uncertainty_db) = if floor_limited {
        let v = to_db(floor / ha);
        (v.is_finite().then_some(v), None)
    } else {
        (Some(to_db(mean / ha)), Some(10.0 / std::f64::consts::LN_10 * se / mean))
    };
    Ok(CrosstalkReport {
        value_db,
        uncertainty_db,
        peak_position: pa,
        peak_height: ha,
        other_peak_position: pb,
        window: (x[start], x[start + opts.n_points - 1]),
        n_window_points: opts.n_points,
        window_mean: mean,
        floor_limited,
    })
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    fn distance_to(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x0 - x).max(0.0).max(x - self.x1);
        let dy = (self.y0 - y).max(0.0).max(y - self.y1);
        dx.hypot(dy)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// `10 log10(mean background intensity / peak intensity)` on a raw 2D scan. The peak is
/// the brightest sample within three cells of `peak`. Returns negative infinity for a
/// background with no signal.
pub fn fiber_scan_background_ratio(
    plane: &ScalarField2D,
    peak: (f64, f64),
    region: &Rect,
    exclusion_radius: f64,
) -> Result<f64> {
    if !(region.x1 > region.x0 && region.y1 > region.y0) {
        return Err(Error::InvalidInput("background region is empty".into()));
    }
    if region.distance_to(peak.0, peak.1) < exclusion_radius {
        return Err(Error::RegionOverlap);
    }
    let reach = 3.0 * plane.dx().max(plane.dy());
    let mut peak_i = 0.0f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((i, j), c) in plane.samples().indexed_iter() {
        let (x, y) = (plane.x(i), plane.y(j));
        let v = c.norm_sqr();
        if (x - peak.0).abs() <= reach && (y - peak.1).abs() <= reach {
            peak_i = peak_i.max(v);
        }
        if region.contains(x, y) {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput("background region holds no samples".into()));
    }
    if !(peak_i > 0.0) {
        return Err(Error::PeakNotFound { hint: peak.0 });
    }
    Ok(to_db(sum / count as f64 / peak_i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabolic_refinement_recovers_offset_vertex() {
        let p = Profile1D::from_fn(0.0, 1.0, 21, |x| 200.0 - (x - 10.3).powi(2)).unwrap();
        let (x, h) = find_peak(&p, 9.0, 3).unwrap();
        assert!((x - 10.3).abs() < 1e-12);
        assert!((h - 200.0).abs() < 1e-12);
    }

    #[test]
    fn missing_peak_is_reported() {
        let p = Profile1D::from_fn(0.0, 1.0, 50, |x| x).unwrap();
        assert!(matches!(find_peak(&p, 20.0, 3), Err(Error::PeakNotFound { .. })));
    }

    #[test]
    fn flat_pedestal_between_peaks() {
        let p = Profile1D::from_fn(0.0, 1.0, 401, |x| {
            let g = |c: f64| (-(x - c).powi(2) / 8.0).exp();
            g(50.0) + g(350.0) + 1e-3
        })
        .unwrap();
        let opts = ExtractOptions {
            n_points: 100,
            ..Default::default()
        };
        let r = extract_crosstalk(&p, 50.0, 350.0, &opts).unwrap();
        assert!((r.value_db.unwrap() - to_db(1e-3 / (1.0 + 1e-3))).abs() < 1e-9);
        assert!(r.window.0 > 50.0 && r.window.1 < 350.0);
        assert!(!r.floor_limited);
        let opts = ExtractOptions {
            n_points: 400,
            ..Default::default()
        };
        assert!(matches!(
            extract_crosstalk(&p, 50.0, 350.0, &opts),
            Err(Error::WindowTooSmall { .. })
        ));
    }
}
