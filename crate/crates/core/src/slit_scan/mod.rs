//! Scanning-slit beam profiling: forward top-hat convolution, multiplicative
//! deconvolution, gain-normalised stitching of overlapping scans, and crosstalk
//! extraction in dB.
//!
//! All ratios are `10 log10` of intensity ratios.

mod deconvolve;
mod extract;
mod io;
mod simulate;
mod stitch;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use deconvolve::{deconvolve, deconvolve_with, top_hat_taps, DeconvolutionOptions, Deconvolved};
pub use extract::{
    extract_crosstalk, fiber_scan_background_ratio, find_peak, CrosstalkReport, ExtractOptions, Rect,
    DEFAULT_WINDOW_POINTS, NUMERICAL_FLOOR_RATIO,
};
pub use io::{read_profile_csv, read_trace, sidecar_path, write_profile_csv, write_trace, TraceSidecar};
pub use simulate::{simulate_scan, top_hat_average, two_peak_profile, NoiseModel, ScanSettings, TwoPeakProfile};
pub use stitch::{plan_segments_around_peaks, plan_uniform_segments, stitch_profiles, stitch_scans, Segment, Stitched};

/// Relative slack when checking that samples sit on a uniform lattice.
pub(crate) const LATTICE_TOLERANCE: f64 = 1e-6;

/// Intensity samples on increasing positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile1D {
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile1D {
    pub fn new(positions: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let p = Self { positions, values };
        p.validate()?;
        Ok(p)
    }

    /// Samples `f` on `n` points starting at `start`, spaced `step`.
    pub fn from_fn(start: f64, step: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let positions: Vec<f64> = (0..n).map(|k| start + k as f64 * step).collect();
        let values = positions.iter().map(|&x| f(x)).collect();
        Self::new(positions, values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.values.len() {
            return Err(Error::InvalidInput(format!(
                "{} positions but {} values",
                self.positions.len(),
                self.values.len()
            )));
        }
        if self.positions.len() < 2 {
            return Err(Error::InvalidInput("profile needs at least two samples".into()));
        }
        if !self.positions.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("positions must be strictly increasing".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "intensity must be finite and non-negative, got {v}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Spacing, if the samples are uniformly spaced.
    pub fn uniform_step(&self) -> Option<f64> {
        let n = self.positions.len();
        let step = (self.positions[n - 1] - self.positions[0]) / (n - 1) as f64;
        self.positions
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= LATTICE_TOLERANCE * step)
            .then_some(step)
    }

    /// Trapezoidal integral.
    pub fn integral(&self) -> f64 {
        self.positions
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (v[0] + v[1]) * (x[1] - x[0]))
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            positions: self.positions.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Linear interpolation; zero outside the sampled range.
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.positions.len();
        if x < self.positions[0] || x > self.positions[n - 1] {
            return 0.0;
        }
        let k = self.positions.partition_point(|&p| p <= x).clamp(1, n - 1);
        let (x0, x1) = (self.positions[k - 1], self.positions[k]);
        let t = (x - x0) / (x1 - x0);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }
}

/// A demodulated slit-scan trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTrace {
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
    pub slit_width: f64,
    /// Recorded only; the model integrates over the full slit height.
    pub slit_height: f64,
    pub step: f64,
    /// Mean level of additive background noise, if known.
    pub noise_floor: Option<f64>,
    /// Amplitude modulation frequency of the source, recorded only.
    pub modulation_hz: Option<f64>,
}

impl ScanTrace {
    pub fn validate(&self) -> Result<()> {
        let p = self.profile();
        p.validate()?;
        if !(self.slit_width > 0.0 && self.slit_width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "slit width must be positive, got {}",
                self.slit_width
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "scan step must be positive, got {}",
                self.step
            )));
        }
        match p.uniform_step() {
            Some(s) if (s - self.step).abs() <= LATTICE_TOLERANCE * self.step => Ok(()),
            _ => Err(Error::InvalidInput(format!(
                "trace positions are not uniformly spaced at the declared step {}",
                self.step
            ))),
        }
    }

    pub fn profile(&self) -> Profile1D {
        Profile1D {
            positions: self.positions.clone(),
            values: self.values.clone(),
        }
    }

    /// Same metadata, new samples.
    pub(crate) fn with_samples(&self, positions: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            positions,
            values,
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut t = self.clone();
        t.values.iter_mut().for_each(|v| *v *= factor);
        t.noise_floor = t.noise_floor.map(|f| f * factor);
        t
    }
}

/// `10 log10(ratio)`.
pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
