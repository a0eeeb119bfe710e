use serde::{Deserialize, Serialize};

use super::{Profile1D, ScanTrace, LATTICE_TOLERANCE};
use crate::error::{Error, Result};

/// Fraction of the overlap maximum above which samples enter the gain fit.
const PEAK_REGION_LEVEL: f64 = 0.5;

/// One scan range, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

fn snap_down(x: f64, origin: f64, step: f64) -> f64 {
    origin + ((x - origin) / step + LATTICE_TOLERANCE).floor() * step
}

fn snap_up(x: f64, origin: f64, step: f64) -> f64 {
    origin + ((x - origin) / step - LATTICE_TOLERANCE).ceil() * step
}

/// Cover `[start, end]` with the fewest segments no longer than `length` whose neighbours
/// share `overlap`. Segment ends are snapped outward onto the lattice `start + k * step`.
pub fn plan_uniform_segments(start: f64, end: f64, length: f64, overlap: f64, step: f64) -> Result<Vec<Segment>> {
    if !(end > start && length > 0.0 && step > 0.0 && overlap >= 0.0) {
        return Err(Error::InvalidInput(
            "segment plan needs end > start and positive length and step".into(),
        ));
    }
    if overlap >= length {
        return Err(Error::InvalidInput(format!(
            "overlap {overlap} must be shorter than the segment length {length}"
        )));
    }
    let span = end - start;
    if span <= length {
        return Ok(vec![Segment {
            start,
            end: snap_up(end, start, step),
        }]);
    }
    let n = ((span - overlap) / (length - overlap)).ceil() as usize;
    let seg = (span + (n - 1) as f64 * overlap) / n as f64;
    let pitch = seg - overlap;
    Ok((0..n)
        .map(|k| {
            let a = start + k as f64 * pitch;
            Segment {
                start: snap_down(a, start, step),
                end: snap_up((a + seg).min(end), start, step),
            }
        })
        .collect())
}

/// One more segment than there are peaks, with each pair of neighbours sharing an
/// overlap of width `overlap` centred on a peak.
pub fn plan_segments_around_peaks(
    start: f64,
    end: f64,
    peaks: &[f64],
    overlap: f64,
    step: f64,
) -> Result<Vec<Segment>> {
    if !(end > start && step > 0.0 && overlap > 0.0) {
        return Err(Error::InvalidInput(
            "segment plan needs end > start and positive overlap and step".into(),
        ));
    }
    let mut p = peaks.to_vec();
    p.sort_by(f64::total_cmp);
    if p.iter()
        .any(|&x| x - 0.5 * overlap <= start || x + 0.5 * overlap >= end)
    {
        return Err(Error::InvalidInput(
            "every peak overlap must lie inside the scan range".into(),
        ));
    }
    if p.windows(2).any(|w| w[1] - w[0] <= overlap) {
        return Err(Error::InvalidInput("peaks closer than the overlap width".into()));
    }
    let mut bounds = vec![start];
    for &x in &p {
        bounds.push(x);
    }
    bounds.push(end);
    Ok((0..=p.len())
        .map(|k| {
            let a = if k == 0 { start } else { bounds[k] - 0.5 * overlap };
            let b = if k == p.len() {
                end
            } else {
                bounds[k + 1] + 0.5 * overlap
            };
            Segment {
                start: snap_down(a, start, step),
                end: snap_up(b, start, step),
            }
        })
        .collect())
}

/// Stitched composite plus the gain applied to each input (the first is 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stitched<T> {
    pub data: T,
    pub gains: Vec<f64>,
}

struct Series<'a> {
    positions: &'a [f64],
    values: &'a [f64],
}

fn stitch_core(series: &[Series<'_>], step: f64, min_overlap: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if series.is_empty() {
        return Err(Error::InvalidInput("nothing to stitch".into()));
    }
    let origin = series.iter().map(|s| s.positions[0]).fold(f64::INFINITY, f64::min);
    let index_of = |x: f64| -> Result<usize> {
        let f = (x - origin) / step;
        let k = f.round();
        if (f - k).abs() > LATTICE_TOLERANCE * f.abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "position {x} is off the common scan lattice"
            )));
        }
        Ok(k as usize)
    };
    let offsets: Vec<usize> = series.iter().map(|s| index_of(s.positions[0])).collect::<Result<_>>()?;
    for s in series {
        index_of(s.positions[s.positions.len() - 1])?;
    }
    if offsets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("scans must be ordered by increasing start".into()));
    }

    let mut gains = vec![1.0; series.len()];
    for s in 1..series.len() {
        let (prev, cur) = (&series[s - 1], &series[s]);
        let lo = offsets[s];
        let hi = (offsets[s - 1] + prev.values.len()).min(offsets[s] + cur.values.len());
        let overlap = if hi > lo { (hi - lo - 1) as f64 * step } else { -step };
        if overlap < min_overlap * (1.0 - 1e-9) {
            return Err(Error::InsufficientOverlap {
                first: s - 1,
                second: s,
                overlap: overlap.max(0.0),
                required: min_overlap,
            });
        }
        let reference: Vec<f64> = (lo..hi)
            .map(|k| gains[s - 1] * prev.values[k - offsets[s - 1]])
            .collect();
        let moving: Vec<f64> = (lo..hi).map(|k| cur.values[k - offsets[s]]).collect();
        let (imax, &vmax) = reference
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty overlap");
        if imax == 0 || imax + 1 == reference.len() || !(vmax > 0.0) {
            return Err(Error::NoPeakInOverlap {
                first: s - 1,
                second: s,
            });
        }
        let level = PEAK_REGION_LEVEL * vmax;
        let mut a = imax;
        while a > 0 && reference[a - 1] >= level {
            a -= 1;
        }
        let mut b = imax;
        while b + 1 < reference.len() && reference[b + 1] >= level {
            b += 1;
        }
        let (mut acc, mut count) = (0.0, 0usize);
        for k in a..=b {
            if reference[k] > 0.0 && moving[k] > 0.0 {
                acc += reference[k].ln() - moving[k].ln();
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::NoPeakInOverlap {
                first: s - 1,
                second: s,
            });
        }
        gains[s] = (acc / count as f64).exp();
    }

    let len = series
        .iter()
        .zip(&offsets)
        .map(|(s, o)| o + s.values.len())
        .max()
        .expect("non-empty");
    let mut sum = vec![0.0; len];
    let mut count = vec![0usize; len];
    for ((s, &o), g) in series.iter().zip(&offsets).zip(&gains) {
        for (k, v) in s.values.iter().enumerate() {
            sum[o + k] += g * v;
            count[o + k] += 1;
        }
    }
    let positions = (0..len).map(|k| origin + k as f64 * step).collect();
    let values = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Ok((positions, values, gains))
}

/// Join scans of one slit setup. Each scan after the first is rescaled by the gain that
/// best matches log intensities over the peak in its overlap with the previous scan;
/// overlapping samples are then averaged.
pub fn stitch_scans(scans: &[ScanTrace], min_overlap: f64) -> Result<Stitched<ScanTrace>> {
    let first = scans
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to stitch".into()))?;
    for s in scans {
        s.validate()?;
        if (s.step - first.step).abs() > LATTICE_TOLERANCE * first.step
            || (s.slit_width - first.slit_width).abs() > LATTICE_TOLERANCE * first.slit_width
        {
            return Err(Error::InvalidInput("scans differ in step or slit width".into()));
        }
    }
    let series: Vec<Series<'_>> = scans
        .iter()
        .map(|s| Series {
            positions: &s.positions,
            values: &s.values,
        })
        .collect();
    let (positions, values, gains) = stitch_core(&series, first.step, min_overlap)?;
    let mut data = first.with_samples(positions, values);
    data.noise_floor = first.noise_floor;
    Ok(Stitched { data, gains })
}

/// [`stitch_scans`] for uniformly sampled profiles with a common spacing.
pub fn stitch_profiles(profiles: &[Profile1D], min_overlap: f64) -> Result<Stitched<Profile1D>> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to stitch".into()))?;
    first.validate()?;
    let step = first
        .uniform_step()
        .ok_or_else(|| Error::InvalidInput("profiles must be uniformly sampled".into()))?;
    for p in profiles {
        p.validate()?;
        match p.uniform_step() {
            Some(s) if (s - step).abs() <= LATTICE_TOLERANCE * step => {}
            _ => return Err(Error::InvalidInput("profiles differ in sample spacing".into())),
        }
    }
    let series: Vec<Series<'_>> = profiles
        .iter()
        .map(|p| Series {
            positions: &p.positions,
            values: &p.values,
        })
        .collect();
    let (positions, values, gains) = stitch_core(&series, step, min_overlap)?;
    Ok(Stitched {
        data: Profile1D { positions, values },
        gains,
    })
}
