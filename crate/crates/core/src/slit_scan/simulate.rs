use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{from_db, Profile1D, ScanTrace};
use crate::error::{Error, Result};

/// Slit geometry and scan lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub slit_width: f64,
    pub step: f64,
    #[serde(default = "default_slit_height")]
    pub slit_height: f64,
    /// First scan position. Defaults to half a slit before the profile starts.
    #[serde(default)]
    pub start: Option<f64>,
    /// Last scan position (inclusive, rounded up to the lattice). Defaults to half a slit
    /// past the profile end.
    #[serde(default)]
    pub end: Option<f64>,
    #[serde(default)]
    pub modulation_hz: Option<f64>,
}

fn default_slit_height() -> f64 {
    1.6e-3
}

impl ScanSettings {
    pub fn new(slit_width: f64, step: f64) -> Self {
        Self {
            slit_width,
            step,
            slit_height: default_slit_height(),
            start: None,
            end: None,
            modulation_hz: None,
        }
    }

    pub fn with_range(mut self, start: f64, end: f64) -> Self {
        self.start = Some(start);
        self.end = Some(end);
        self
    }
}

/// Additive background and multiplicative noise for synthetic traces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Mean additive floor in dB relative to the noise-free trace maximum. Samples are
    /// drawn uniformly from `[0, 2 * floor]`.
    #[serde(default)]
    pub floor_db: Option<f64>,
    /// Standard deviation of multiplicative Gaussian noise.
    #[serde(default)]
    pub proportional: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_none(&self) -> bool {
        self.floor_db.is_none() && self.proportional == 0.0
    }
}

/// Exact running integral of the piecewise-linear interpolant of a profile, which is
/// taken to be zero outside its sampled range.
struct Cumulative<'a> {
    p: &'a Profile1D,
    nodes: Vec<f64>,
}

impl<'a> Cumulative<'a> {
    fn new(p: &'a Profile1D) -> Self {
        let mut nodes = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        nodes.push(0.0);
        for k in 1..p.len() {
            acc += 0.5 * (p.values[k - 1] + p.values[k]) * (p.positions[k] - p.positions[k - 1]);
            nodes.push(acc);
        }
        Self { p, nodes }
    }

    fn at(&self, x: f64) -> f64 {
        let (xs, vs) = (&self.p.positions, &self.p.values);
        let n = xs.len();
        if x <= xs[0] {
            return 0.0;
        }
        if x >= xs[n - 1] {
            return self.nodes[n - 1];
        }
        let k = xs.partition_point(|&p| p <= x) - 1;
        let t = x - xs[k];
        let slope = (vs[k + 1] - vs[k]) / (xs[k + 1] - xs[k]);
        self.nodes[k] + t * (vs[k] + 0.5 * slope * t)
    }
}

/// Mean of the profile over `[c - w/2, c + w/2]` for each centre `c`.
pub fn top_hat_average(profile: &Profile1D, centres: &[f64], width: f64) -> Vec<f64> {
    let cum = Cumulative::new(profile);
    centres
        .iter()
        .map(|&c| ((cum.at(c + 0.5 * width) - cum.at(c - 0.5 * width)) / width).max(0.0))
        .collect()
}

/// Convolve the profile with a unit-area top-hat of the slit width and sample the result
/// at the scan positions.
pub fn simulate_scan(profile: &Profile1D, settings: &ScanSettings, noise: &NoiseModel) -> Result<ScanTrace> {
    profile.validate()?;
    let w = settings.slit_width;
    let step = settings.step;
    if !(w > 0.0 && w.is_finite() && step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "slit width and step must be positive, got {w} and {step}"
        )));
    }
    let coarsest = profile.positions.windows(2).map(|p| p[1] - p[0]).fold(0.0f64, f64::max);
    if coarsest > w / 4.0 * (1.0 + 1e-9) {
        return Err(Error::Sampling(format!(
            "profile spacing {coarsest:.3e} m is coarser than a quarter of the slit width {w:.3e} m"
        )));
    }
    let n = profile.len();
    let start = settings.start.unwrap_or(profile.positions[0] - 0.5 * w);
    let end = settings.end.unwrap_or(profile.positions[n - 1] + 0.5 * w);
    if !(end >= start) {
        return Err(Error::InvalidInput(format!("scan range [{start}, {end}] is empty")));
    }
    let count = ((end - start) / step * (1.0 - 1e-12)).ceil() as usize + 1;
    let positions: Vec<f64> = (0..count).map(|k| start + k as f64 * step).collect();
    let mut values = top_hat_average(profile, &positions, w);
    let noise_floor = apply_noise(&mut values, noise);
    Ok(ScanTrace {
        positions,
        values,
        slit_width: w,
        slit_height: settings.slit_height,
        step,
        noise_floor,
        modulation_hz: settings.modulation_hz,
    })
}

fn apply_noise(values: &mut [f64], noise: &NoiseModel) -> Option<f64> {
    if noise.is_none() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let peak = values.iter().copied().fold(0.0f64, f64::max);
    if noise.proportional > 0.0 {
        let dist = Normal::new(0.0, noise.proportional).expect("finite standard deviation");
        for v in values.iter_mut() {
            *v = (*v * (1.0 + dist.sample(&mut rng))).max(0.0);
        }
    }
    let floor = noise.floor_db.map(|db| peak * from_db(db));
    if let Some(level) = floor {
        for v in values.iter_mut() {
            *v += rng.random_range(0.0..=2.0 * level);
        }
    }
    floor
}

/// Two unit-height Gaussians on a uniform pedestal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPeakProfile {
    pub centre: f64,
    pub separation: f64,
    /// Gaussian standard deviation.
    pub sigma: f64,
    /// Pedestal level relative to the unit peak; `None` for no pedestal.
    pub pedestal_db: Option<f64>,
    pub half_range: f64,
    pub sample_step: f64,
}

/// Sample a [`TwoPeakProfile`].
pub fn two_peak_profile(spec: &TwoPeakProfile) -> Result<Profile1D> {
    if !(spec.sigma > 0.0 && spec.sample_step > 0.0 && spec.half_range > 0.0) {
        return Err(Error::InvalidInput(
            "two-peak profile needs positive sigma, step and range".into(),
        ));
    }
    let n = (2.0 * spec.half_range / spec.sample_step).round() as usize + 1;
    let start = spec.centre - spec.half_range;
    let ped = spec.pedestal_db.map_or(0.0, from_db);
    let (a, b) = (spec.centre - 0.5 * spec.separation, spec.centre + 0.5 * spec.separation);
    let s2 = 2.0 * spec.sigma * spec.sigma;
    Profile1D::from_fn(start, spec.sample_step, n, |x| {
        (-(x - a).powi(2) / s2).exp() + (-(x - b).powi(2) / s2).exp() + ped
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_integral_is_exact_for_linear_pieces() {
        let p = Profile1D::from_fn(0.0, 1.0, 3, |x| if x == 1.0 { 2.0 } else { 0.0 }).unwrap();
        let c = Cumulative::new(&p);
        assert!((c.at(0.5) - 0.25).abs() < 1e-15);
        assert!((c.at(1.0) - 1.0).abs() < 1e-15);
        assert!((c.at(5.0) - 2.0).abs() < 1e-15);
        assert_eq!(c.at(-1.0), 0.0);
    }

    #[test]
    fn coarse_profile_is_rejected() {
        let p = Profile1D::from_fn(0.0, 2e-6, 50, |_| 1.0).unwrap();
        let r = simulate_scan(&p, &ScanSettings::new(5e-6, 1e-6), &NoiseModel::none());
        assert!(matches!(r, Err(Error::Sampling(_))));
    }

    #[test]
    fn noise_is_deterministic_and_records_floor() {
        let p = Profile1D::from_fn(-50e-6, 0.25e-6, 401, |x| (-(x / 10e-6).powi(2)).exp()).unwrap();
        let noise = NoiseModel {
            floor_db: Some(-40.0),
            proportional: 0.01,
            seed: 7,
        };
        let s = ScanSettings::new(5e-6, 1e-6);
        let a = simulate_scan(&p, &s, &noise).unwrap();
        let b = simulate_scan(&p, &s, &noise).unwrap();
        assert_eq!(a, b);
        let floor = a.noise_floor.unwrap();
        let peak = simulate_scan(&p, &s, &NoiseModel::none())
            .unwrap()
            .values
            .iter()
            .copied()
            .fold(0.0, f64::max);
        assert!((floor / peak - 1e-4).abs() < 1e-12);
        assert!(a.values.iter().all(|v| *v >= 0.0));
    }
}
