//! End-to-end scenarios.
//!
//! - Delivery: taper-tip mode, channels laid out to match the ion chain, imaging onto the
//!   ion plane, crosstalk at each ion.
//! - Metrology: a magnified image of the facet (or a synthetic or recorded profile) is
//!   scanned with a slit in overlapping segments, stitched, deconvolved and reduced to a
//!   crosstalk figure.
//!
//! Every failure is tagged with the [`Stage`] it came from. Artifacts go to a
//! subdirectory named after a hash of the configuration.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beam_train::{
    compose_facet_field, crosstalk_row, default_integration_radius, image_field, local_peaks, BeamTrainSummary,
    ChannelLayout, Combination, ImagingSystemSpec, PlaneGrid,
};
use crate::design::{pitch_ratio, PitchCheck, DEFAULT_PITCH_BAND};
use crate::error::{Error, Result, Stage, StageContext};
use crate::fft::Fft2;
use crate::field::ScalarField2D;
use crate::ion_chain::{min_gap, physical_positions, IonChain, IonChainSpec};
use crate::mode_solver::{
    solve_modes, GridSpec, GuidedMode, ModeSummary, Polarization, SolverOptions, WaveguideGeometry,
};
use crate::slit_scan::{
    deconvolve_with, extract_crosstalk, from_db, plan_segments_around_peaks, plan_uniform_segments, read_trace,
    simulate_scan, stitch_scans, two_peak_profile, write_profile_csv, write_trace, CrosstalkReport,
    DeconvolutionOptions, ExtractOptions, NoiseModel, Profile1D, ScanSettings, ScanTrace, Segment, TwoPeakProfile,
};
use crate::taper::TaperProfile;
use crate::units::{serde_length, serde_length_opt, serde_length_vec};

/// Where the facet channels go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayoutSpec {
    /// Channels at the ion positions divided by the magnification. With only a pitch
    /// factor given, the magnification is its reciprocal.
    MatchIonChain {
        #[serde(default)]
        pitch_factor: Option<f64>,
    },
    /// Facet-plane channel centres.
    Explicit {
        #[serde(with = "serde_length_vec")]
        positions: Vec<f64>,
    },
}

impl Default for LayoutSpec {
    fn default() -> Self {
        LayoutSpec::MatchIonChain {
            pitch_factor: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingConfig {
    #[serde(default)]
    pub magnification: Option<f64>,
    pub numerical_aperture: f64,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            magnification: None,
            numerical_aperture: 0.2,
        }
    }
}

/// Sampling of the facet plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacetGridConfig {
    #[serde(with = "serde_length")]
    pub step: f64,
    /// Clearance beyond the outermost channels.
    #[serde(with = "serde_length")]
    pub pad: f64,
    #[serde(with = "serde_length")]
    pub half_height: f64,
}

impl Default for FacetGridConfig {
    fn default() -> Self {
        Self {
            step: 0.1e-6,
            pad: 10e-6,
            half_height: 10e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkConfig {
    /// Disc radius at the ion plane; defaults to `lambda / (2 NA_image)`.
    #[serde(default, with = "serde_length_opt")]
    pub integration_radius: Option<f64>,
    /// Nearest-neighbour entries at or below this level pass.
    pub target_db: f64,
}

impl Default for CrosstalkConfig {
    fn default() -> Self {
        Self {
            integration_radius: None,
            target_db: -50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetrologySource {
    /// The composed facet field of the delivery scenario.
    Delivery,
    /// Two unit Gaussians; separation and sigma are object-plane values.
    TwoGaussians {
        #[serde(with = "serde_length")]
        separation: f64,
        #[serde(with = "serde_length")]
        sigma: f64,
    },
    /// Pre-recorded traces in scan order; peak hints in scan-plane coordinates.
    Recorded {
        traces: Vec<PathBuf>,
        #[serde(with = "serde_length")]
        peak_a: f64,
        #[serde(with = "serde_length")]
        peak_b: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segmentation {
    /// Segments no longer than `length`, neighbours sharing `overlap`.
    Uniform {
        #[serde(with = "serde_length")]
        length: f64,
        #[serde(with = "serde_length")]
        overlap: f64,
    },
    /// One overlap of width `overlap` centred on each of the two peaks.
    AroundPeaks {
        #[serde(with = "serde_length")]
        overlap: f64,
    },
}

impl Default for Segmentation {
    fn default() -> Self {
        Segmentation::Uniform {
            length: 10e-3,
            overlap: 2e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetrologyConfig {
    pub enabled: bool,
    pub source: MetrologySource,
    /// Magnification from the facet to the slit plane.
    pub scan_magnification: f64,
    /// Object-side NA of the metrology objective.
    pub scan_na: f64,
    /// Index of the first channel of the measured pair; defaults to the closest pair.
    pub pair: Option<usize>,
    #[serde(with = "serde_length")]
    pub profile_step: f64,
    #[serde(with = "serde_length")]
    pub slit_width: f64,
    #[serde(with = "serde_length")]
    pub step: f64,
    #[serde(with = "serde_length")]
    pub slit_height: f64,
    pub modulation_hz: Option<f64>,
    /// Scan range beyond each peak.
    #[serde(with = "serde_length")]
    pub scan_margin: f64,
    pub segmentation: Segmentation,
    /// Defaults to half the planned overlap.
    #[serde(with = "serde_length_opt")]
    pub min_overlap: Option<f64>,
    /// Segment `k` is recorded with gain `gain_drift^k`.
    pub gain_drift: f64,
    /// Uniform pedestal added to the profile, dB relative to its maximum.
    pub pedestal_db: Option<f64>,
    pub noise: NoiseModel,
    pub window_points: usize,
    pub deconvolution: DeconvolutionOptions,
}

impl Default for MetrologyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            source: MetrologySource::Delivery,
            scan_magnification: 50.0,
            scan_na: 0.55,
            pair: None,
            profile_step: 0.5e-6,
            slit_width: 5e-6,
            step: 1e-6,
            slit_height: 1.6e-3,
            modulation_hz: Some(28.1e3),
            scan_margin: 1e-3,
            segmentation: Segmentation::default(),
            min_overlap: None,
            gain_drift: 1.0,
            pedestal_db: None,
            noise: NoiseModel::none(),
            window_points: 1000,
            deconvolution: DeconvolutionOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub waveguide: WaveguideGeometry,
    pub taper: TaperProfile,
    pub mode_grid: GridSpec,
    pub polarization: Polarization,
    pub ion_chain: IonChainSpec,
    pub layout: LayoutSpec,
    /// Power per channel; defaults to 1 W in each.
    pub channel_powers: Option<Vec<f64>>,
    pub imaging: ImagingConfig,
    pub facet_grid: FacetGridConfig,
    pub combination: Combination,
    pub crosstalk: CrosstalkConfig,
    pub metrology: MetrologyConfig,
    /// Parent of the content-addressed artifact directory; nothing is written if unset.
    pub output_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            waveguide: WaveguideGeometry::routing_default(),
            taper: TaperProfile::default(),
            mode_grid: GridSpec {
                dx: 10e-9,
                dy: 10e-9,
                margin: 3e-6,
            },
            polarization: Polarization::TE,
            ion_chain: IonChainSpec::ba138_default(),
            layout: LayoutSpec::default(),
            channel_powers: None,
            imaging: ImagingConfig::default(),
            facet_grid: FacetGridConfig::default(),
            combination: Combination::Incoherent,
            crosstalk: CrosstalkConfig::default(),
            metrology: MetrologyConfig::default(),
            output_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("scenario config: {e}")))
            .stage(Stage::Config)?;
        cfg.validate().stage(Stage::Config)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))
            .stage(Stage::Config)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.waveguide.validate()?;
        self.taper.validate()?;
        self.mode_grid.validate()?;
        self.ion_chain.validate()?;
        if !(self.imaging.numerical_aperture > 0.0 && self.imaging.numerical_aperture <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "numerical aperture must lie in (0, 1], got {}",
                self.imaging.numerical_aperture
            )));
        }
        self.magnification()?;
        let f = &self.facet_grid;
        if !(f.step > 0.0 && f.pad >= 0.0 && f.half_height > 0.0) {
            return Err(Error::InvalidInput(
                "facet grid needs a positive step and height".into(),
            ));
        }
        if let Some(p) = &self.channel_powers {
            if p.len() != self.channel_count() {
                return Err(Error::InvalidInput(format!(
                    "{} channel powers for {} channels",
                    p.len(),
                    self.channel_count()
                )));
            }
        }
        let m = &self.metrology;
        if !(m.scan_magnification > 0.0 && m.scan_na > 0.0 && m.scan_na <= 1.0) {
            return Err(Error::InvalidInput(
                "metrology magnification and NA must be positive, NA <= 1".into(),
            ));
        }
        if !(m.gain_drift > 0.0 && m.gain_drift.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gain drift must be positive, got {}",
                m.gain_drift
            )));
        }
        if !(m.slit_width > 0.0 && m.step > 0.0 && m.profile_step > 0.0 && m.scan_margin > 0.0) {
            return Err(Error::InvalidInput(
                "slit width, steps and scan margin must be positive".into(),
            ));
        }
        Ok(())
    }

    fn channel_count(&self) -> usize {
        match &self.layout {
            LayoutSpec::MatchIonChain { .. } => self.ion_chain.n_ions,
            LayoutSpec::Explicit { positions } => positions.len(),
        }
    }

    /// Facet-to-ion-plane magnification implied by the imaging and layout settings.
    pub fn magnification(&self) -> Result<f64> {
        let m = match (&self.layout, self.imaging.magnification) {
            (LayoutSpec::MatchIonChain { pitch_factor: Some(p) }, None) => {
                if !(*p > 0.0 && p.is_finite()) {
                    return Err(Error::InvalidInput(format!("pitch factor must be positive, got {p}")));
                }
                1.0 / p
            }
            (LayoutSpec::MatchIonChain { pitch_factor: Some(p) }, Some(m)) => {
                if ((p * m) - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "pitch factor {p} and magnification {m} disagree; give one or make p * M = 1"
                    )));
                }
                m
            }
            (_, Some(m)) => m,
            (LayoutSpec::MatchIonChain { pitch_factor: None }, None) | (LayoutSpec::Explicit { .. }, None) => {
                return Err(Error::InvalidInput("magnification or pitch factor required".into()))
            }
        };
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidInput(format!("magnification must be positive, got {m}")));
        }
        Ok(m)
    }

    /// Hex SHA-256 of the serialised configuration.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    /// `output_dir/scenario-<first 16 hex digits>`, if an output directory is set.
    pub fn artifact_dir(&self) -> Option<PathBuf> {
        self.output_dir
            .as_ref()
            .map(|d| d.join(format!("scenario-{}", &self.content_hash()[..16])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub config_hash: String,
    pub mode: ModeSummary,
    pub tip_width: f64,
    pub magnification: f64,
    pub numerical_aperture: f64,
    pub ion_positions: Vec<f64>,
    pub channel_positions: Vec<f64>,
    pub pitch: Option<PitchCheck>,
    pub beam_train: BeamTrainSummary,
    pub target_db: f64,
    /// True when every nearest-neighbour entry is at or below the target.
    pub meets_target: bool,
}

pub struct DeliveryResult {
    pub mode: GuidedMode,
    pub chain: IonChain,
    pub layout: ChannelLayout,
    pub facet_grid: PlaneGrid,
    /// Summed intensity of all channels at the ion plane (amplitude `sqrt(I)` for
    /// incoherent summation).
    pub ion_plane: ScalarField2D,
    pub targets: Vec<(f64, f64)>,
    pub crosstalk: Vec<Vec<f64>>,
    pub report: DeliveryReport,
}

fn solve_tip_mode(cfg: &ScenarioConfig) -> Result<GuidedMode> {
    let geom = cfg.waveguide.with_width(cfg.taper.end_width);
    let grid = cfg.mode_grid.grid_around(&geom)?;
    solve_modes(&geom, &grid, cfg.polarization, 1, &SolverOptions::default())?
        .into_iter()
        .next()
        .ok_or(Error::ModeNotGuided { width: geom.core_width })
}

fn channel_positions(cfg: &ScenarioConfig, chain: &IonChain, m: f64) -> Vec<f64> {
    match &cfg.layout {
        LayoutSpec::MatchIonChain { .. } => chain.positions.iter().map(|x| x / m).collect(),
        LayoutSpec::Explicit { positions } => positions.clone(),
    }
}

/// Design through to ion-plane crosstalk.
pub fn run_delivery_scenario(cfg: &ScenarioConfig) -> Result<DeliveryResult> {
    cfg.validate().stage(Stage::Config)?;
    let m = cfg.magnification().stage(Stage::Config)?;
    let mode = solve_tip_mode(cfg).stage(Stage::Mode)?;
    let chain = physical_positions(&cfg.ion_chain).stage(Stage::IonChain)?;

    let positions = channel_positions(cfg, &chain, m);
    let powers = cfg.channel_powers.clone().unwrap_or_else(|| vec![1.0; positions.len()]);
    let (layout, grid) = (|| -> Result<_> {
        let layout = ChannelLayout::new(positions.clone(), mode.field.clone(), powers)?;
        let f = &cfg.facet_grid;
        let grid = PlaneGrid::covering(&positions, f.pad, f.half_height, f.step)?;
        Ok((layout, grid))
    })()
    .stage(Stage::Layout)?;

    let sys = ImagingSystemSpec::new(m, cfg.imaging.numerical_aperture).stage(Stage::Imaging)?;
    let lambda = cfg.waveguide.wavelength;
    let radius = cfg
        .crosstalk
        .integration_radius
        .unwrap_or_else(|| default_integration_radius(lambda, sys.image_na()));
    let targets: Vec<(f64, f64)> = positions.iter().map(|x| (x * m, 0.0)).collect();

    let mut intensity: Option<ndarray::Array2<f64>> = None;
    let mut image_template: Option<ScalarField2D> = None;
    let mut matrix = Vec::with_capacity(positions.len());
    let mut peak_powers = Vec::with_capacity(positions.len());
    for k in 0..positions.len() {
        let single = compose_facet_field(&layout.single(k), &grid, Combination::Coherent).stage(Stage::Layout)?;
        let img = image_field(&single, &sys).stage(Stage::Imaging)?;
        matrix.push(crosstalk_row(&img, k, &targets, radius).stage(Stage::Crosstalk)?);
        peak_powers.push(img.disc_power(targets[k].0, targets[k].1, radius));
        if cfg.combination == Combination::Incoherent {
            let i = img.intensity();
            match intensity.as_mut() {
                Some(acc) => *acc += &i,
                None => intensity = Some(i),
            }
        }
        image_template.get_or_insert(img);
    }
    let template = image_template.expect("at least one channel");
    let ion_plane = match cfg.combination {
        Combination::Incoherent => {
            let acc = intensity.expect("at least one channel");
            ScalarField2D::new(
                acc.mapv(|v| Complex64::new(v.sqrt(), 0.0)),
                template.dx(),
                template.dy(),
                template.origin(),
                lambda,
            )
            .stage(Stage::Imaging)?
        }
        Combination::Coherent => {
            let composed = compose_facet_field(&layout, &grid, Combination::Coherent).stage(Stage::Layout)?;
            image_field(&composed, &sys).stage(Stage::Imaging)?
        }
    };

    let half_window = min_gap(&targets.iter().map(|t| t.0).collect::<Vec<_>>()).map_or(f64::INFINITY, |g| 0.5 * g);
    let peaks = local_peaks(
        &ion_plane,
        &targets.iter().map(|t| t.0).collect::<Vec<_>>(),
        half_window,
    );
    let summary = BeamTrainSummary::new(&peaks, peak_powers, radius, &matrix);
    let meets_target = summary
        .worst_nearest_neighbor_db
        .is_none_or(|w| w <= cfg.crosstalk.target_db)
        && matrix.iter().all(|r| r.iter().all(|v| !v.is_nan()));
    let pitch = match (min_gap(&positions), chain.min_gap()) {
        (Some(c), Some(i)) => Some(pitch_ratio(c, i, DEFAULT_PITCH_BAND)),
        _ => None,
    };
    let report = DeliveryReport {
        config_hash: cfg.content_hash(),
        mode: mode.summary(),
        tip_width: cfg.taper.end_width,
        magnification: m,
        numerical_aperture: sys.numerical_aperture,
        ion_positions: chain.positions.clone(),
        channel_positions: positions,
        pitch,
        beam_train: summary,
        target_db: cfg.crosstalk.target_db,
        meets_target,
    };
    Ok(DeliveryResult {
        mode,
        chain,
        layout,
        facet_grid: grid,
        ion_plane,
        targets,
        crosstalk: matrix,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeconvolutionSummary {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetrologyReport {
    pub config_hash: String,
    pub crosstalk: CrosstalkReport,
    /// Peak hints in scan-plane coordinates.
    pub peak_hints: (f64, f64),
    pub segments: Vec<Segment>,
    pub gains: Vec<f64>,
    pub deconvolution: DeconvolutionSummary,
    pub injected_pedestal_db: Option<f64>,
}

pub struct MetrologyResult {
    pub profile: Option<Profile1D>,
    pub segments: Vec<ScanTrace>,
    pub stitched: ScanTrace,
    pub deconvolved: Profile1D,
    pub report: MetrologyReport,
}

/// Band-limited interpolation of a uniformly sampled real line by an integer factor.
fn upsample(values: &[f64], factor: usize) -> Vec<f64> {
    let n = values.len();
    if factor <= 1 {
        return values.to_vec();
    }
    let big = n * factor;
    let fwd = Fft2::new(n, 1);
    let mut spec = ndarray::Array2::from_shape_fn((n, 1), |(i, _)| Complex64::new(values[i], 0.0));
    fwd.forward(&mut spec);
    let mut padded = ndarray::Array2::<Complex64>::zeros((big, 1));
    let half = n / 2;
    for k in 0..n {
        let dst = if k < half || (k == half && n % 2 == 1) {
            k
        } else {
            big - (n - k)
        };
        padded[[dst, 0]] = spec[[k, 0]];
    }
    if n.is_multiple_of(2) {
        // Split the Nyquist bin so the result stays real.
        let nyq = spec[[half, 0]];
        padded[[half, 0]] = nyq * 0.5;
        padded[[big - half, 0]] = nyq * 0.5;
    }
    Fft2::new(big, 1).inverse(&mut padded);
    padded.iter().map(|c| c.re * factor as f64).collect()
}

/// Image the facet field at the metrology magnification and integrate over y.
fn facet_line_profile(facet: &ScalarField2D, cfg: &MetrologyConfig) -> Result<Profile1D> {
    let sys = ImagingSystemSpec::new(cfg.scan_magnification, cfg.scan_na)?;
    let img = image_field(facet, &sys)?;
    let line: Vec<f64> = img
        .samples()
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|c| c.norm_sqr()).sum::<f64>() * img.dy())
        .collect();
    let factor = (img.dx() / cfg.profile_step).ceil().max(1.0) as usize;
    let fine = upsample(&line, factor);
    let step = img.dx() / factor as f64;
    let x0 = img.origin().0;
    Profile1D::new(
        (0..fine.len()).map(|k| x0 + k as f64 * step).collect(),
        fine.into_iter().map(|v| v.max(0.0)).collect(),
    )
}

fn crop(profile: &Profile1D, lo: f64, hi: f64) -> Result<Profile1D> {
    let a = profile.positions.partition_point(|&x| x < lo);
    let b = profile.positions.partition_point(|&x| x <= hi);
    Profile1D::new(profile.positions[a..b].to_vec(), profile.values[a..b].to_vec())
}

fn closest_pair(positions: &[f64]) -> Option<usize> {
    positions
        .windows(2)
        .enumerate()
        .min_by(|a, b| (a.1[1] - a.1[0]).total_cmp(&(b.1[1] - b.1[0])))
        .map(|(k, _)| k)
}

fn plan(cfg: &MetrologyConfig, start: f64, end: f64, peaks: (f64, f64)) -> Result<(Vec<Segment>, f64)> {
    match cfg.segmentation {
        Segmentation::Uniform { length, overlap } => {
            Ok((plan_uniform_segments(start, end, length, overlap, cfg.step)?, overlap))
        }
        Segmentation::AroundPeaks { overlap } => Ok((
            plan_segments_around_peaks(start, end, &[peaks.0, peaks.1], overlap, cfg.step)?,
            overlap,
        )),
    }
}

/// Synthetic or recorded slit-scan measurement reduced to a crosstalk figure. A delivery
/// result is needed only for [`MetrologySource::Delivery`].
pub fn run_metrology_scenario(cfg: &ScenarioConfig, delivery: Option<&DeliveryResult>) -> Result<MetrologyResult> {
    cfg.validate().stage(Stage::Config)?;
    let mc = &cfg.metrology;
    let mag = mc.scan_magnification;

    let (profile, hints, scans, overlap) = match &mc.source {
        MetrologySource::Recorded { traces, peak_a, peak_b } => {
            let scans = traces
                .iter()
                .map(|p| read_trace(p))
                .collect::<Result<Vec<_>>>()
                .stage(Stage::Profile)?;
            let overlap = match mc.segmentation {
                Segmentation::Uniform { overlap, .. } | Segmentation::AroundPeaks { overlap } => overlap,
            };
            (None, (*peak_a, *peak_b), scans, overlap)
        }
        source => {
            let (full, hints) = (|| -> Result<_> {
                match source {
                    MetrologySource::Delivery => {
                        let d = delivery.ok_or_else(|| {
                            Error::InvalidInput("delivery-sourced metrology needs a delivery result".into())
                        })?;
                        let pos = &d.layout.positions;
                        let k = match mc.pair {
                            Some(k) if k + 1 < pos.len() => k,
                            Some(k) => return Err(Error::InvalidInput(format!("no channel pair starting at {k}"))),
                            None => closest_pair(pos)
                                .ok_or_else(|| Error::InvalidInput("metrology needs at least two channels".into()))?,
                        };
                        let facet = compose_facet_field(&d.layout, &d.facet_grid, cfg.combination)?;
                        Ok((facet_line_profile(&facet, mc)?, (pos[k] * mag, pos[k + 1] * mag)))
                    }
                    MetrologySource::TwoGaussians { separation, sigma } => {
                        let sep = separation * mag;
                        let spec = TwoPeakProfile {
                            centre: 0.0,
                            separation: sep,
                            sigma: sigma * mag,
                            pedestal_db: None,
                            half_range: 0.5 * sep + mc.scan_margin + mc.slit_width,
                            sample_step: mc.profile_step,
                        };
                        Ok((two_peak_profile(&spec)?, (-0.5 * sep, 0.5 * sep)))
                    }
                    MetrologySource::Recorded { .. } => unreachable!(),
                }
            })()
            .stage(Stage::Profile)?;
            let (lo, hi) = (
                hints.0.min(hints.1) - mc.scan_margin,
                hints.0.max(hints.1) + mc.scan_margin,
            );
            let mut profile = crop(&full, lo - mc.slit_width, hi + mc.slit_width).stage(Stage::Profile)?;
            if let Some(db) = mc.pedestal_db {
                let peak = profile.values.iter().copied().fold(0.0f64, f64::max);
                let ped = peak * from_db(db);
                profile.values.iter_mut().for_each(|v| *v += ped);
            }
            let (segments, overlap) = plan(mc, lo, hi, hints).stage(Stage::SlitSimulate)?;
            let mut scans = Vec::with_capacity(segments.len());
            for (k, seg) in segments.iter().enumerate() {
                let settings = ScanSettings {
                    slit_width: mc.slit_width,
                    step: mc.step,
                    slit_height: mc.slit_height,
                    start: Some(seg.start),
                    end: Some(seg.end),
                    modulation_hz: mc.modulation_hz,
                };
                let noise = NoiseModel {
                    seed: mc.noise.seed.wrapping_add(k as u64),
                    ..mc.noise
                };
                let trace = simulate_scan(&profile, &settings, &noise).stage(Stage::SlitSimulate)?;
                scans.push(trace.scaled(mc.gain_drift.powi(k as i32)));
            }
            (Some(profile), hints, scans, overlap)
        }
    };

    let min_overlap = mc.min_overlap.unwrap_or(0.5 * overlap);
    let stitched = if scans.len() == 1 {
        crate::slit_scan::Stitched {
            data: scans[0].clone(),
            gains: vec![1.0],
        }
    } else {
        stitch_scans(&scans, min_overlap).stage(Stage::Stitch)?
    };
    let dec = deconvolve_with(&stitched.data, &mc.deconvolution).stage(Stage::Deconvolve)?;
    let opts = ExtractOptions {
        n_points: mc.window_points,
        noise_floor: stitched.data.noise_floor,
        ..Default::default()
    };
    let report = extract_crosstalk(&dec.profile, hints.0, hints.1, &opts).stage(Stage::Extract)?;
    let segments = scans
        .iter()
        .map(|s| Segment {
            start: s.positions[0],
            end: s.positions[s.positions.len() - 1],
        })
        .collect();
    Ok(MetrologyResult {
        profile,
        segments: scans,
        stitched: stitched.data,
        deconvolved: dec.profile.clone(),
        report: MetrologyReport {
            config_hash: cfg.content_hash(),
            crosstalk: report,
            peak_hints: hints,
            segments,
            gains: stitched.gains,
            deconvolution: DeconvolutionSummary {
                iterations: dec.iterations,
                residual: dec.residual,
                converged: dec.converged,
            },
            injected_pedestal_db: mc.pedestal_db,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub config_hash: String,
    pub delivery: DeliveryReport,
    pub metrology: Option<MetrologyReport>,
    pub artifact_dir: Option<PathBuf>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Ion-plane intensity integrated over y, as `position_um,intensity`.
fn write_ion_plane_line(field: &ScalarField2D, path: &Path) -> Result<()> {
    let values: Vec<f64> = field
        .samples()
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|c| c.norm_sqr()).sum::<f64>() * field.dy())
        .collect();
    let positions = (0..field.nx()).map(|i| field.x(i)).collect();
    write_profile_csv(&Profile1D::new(positions, values)?, path)
}

fn write_artifacts(dir: &Path, cfg: &ScenarioConfig, d: &DeliveryResult, m: Option<&MetrologyResult>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("config.json"), cfg)?;
    write_json(&dir.join("mode_summary.json"), &d.report.mode)?;
    d.mode.field.write_csv_file(&dir.join("facet_mode.csv"))?;
    write_ion_plane_line(&d.ion_plane, &dir.join("ion_plane_line.csv"))?;
    write_json(&dir.join("beam_train_summary.json"), &d.report.beam_train)?;
    write_json(&dir.join("delivery_report.json"), &d.report)?;
    let mut chain_csv = Vec::new();
    d.chain.write_csv(&mut chain_csv)?;
    let p = dir.join("ion_chain.csv");
    std::fs::write(&p, chain_csv).map_err(|e| Error::io(&p, e))?;
    if let Some(m) = m {
        if let Some(profile) = &m.profile {
            write_profile_csv(profile, &dir.join("scan_profile.csv"))?;
        }
        for (k, s) in m.segments.iter().enumerate() {
            write_trace(s, &dir.join(format!("segment_{k}.csv")))?;
        }
        write_trace(&m.stitched, &dir.join("stitched.csv"))?;
        write_profile_csv(&m.deconvolved, &dir.join("deconvolved.csv"))?;
        write_json(&dir.join("crosstalk_report.json"), &m.report.crosstalk)?;
        write_json(&dir.join("metrology_report.json"), &m.report)?;
    }
    Ok(())
}

/// Delivery, then metrology if enabled, then artifacts if an output directory is set.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(ScenarioReport, DeliveryResult, Option<MetrologyResult>)> {
    let delivery = run_delivery_scenario(cfg)?;
    let metrology = if cfg.metrology.enabled {
        Some(run_metrology_scenario(cfg, Some(&delivery))?)
    } else {
        None
    };
    let dir = cfg.artifact_dir();
    let report = ScenarioReport {
        config_hash: cfg.content_hash(),
        delivery: delivery.report.clone(),
        metrology: metrology.as_ref().map(|m| m.report.clone()),
        artifact_dir: dir.clone(),
    };
    if let Some(dir) = &dir {
        write_artifacts(dir, cfg, &delivery, metrology.as_ref()).stage(Stage::Artifacts)?;
        write_json(&dir.join("report.json"), &report).stage(Stage::Artifacts)?;
    }
    Ok((report, delivery, metrology))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsampling_reproduces_band_limited_signal() {
        let n = 64;
        let f = |t: f64| 2.0 + (2.0 * std::f64::consts::PI * 3.0 * t / n as f64).cos();
        let coarse: Vec<f64> = (0..n).map(|k| f(k as f64)).collect();
        let fine = upsample(&coarse, 4);
        for (k, v) in fine.iter().enumerate() {
            assert!((v - f(k as f64 / 4.0)).abs() < 1e-12, "{k}");
        }
    }

    #[test]
    fn magnification_resolution() {
        let mut c = ScenarioConfig::default();
        assert!((c.magnification().unwrap() - 0.2).abs() < 1e-15);
        c.imaging.magnification = Some(0.187);
        assert!(c.magnification().is_err());
        c.layout = LayoutSpec::MatchIonChain { pitch_factor: None };
        assert_eq!(c.magnification().unwrap(), 0.187);
        c.imaging.magnification = None;
        assert!(c.magnification().is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.imaging.numerical_aperture = 0.25;
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn default_config_round_trips_through_json() {
        let a = ScenarioConfig::default();
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), a);
        assert_eq!(ScenarioConfig::from_json("{}").unwrap(), a);
    }

    #[test]
    fn config_errors_carry_the_config_stage() {
        let e = ScenarioConfig::from_json(r#"{"imaging": {"numerical_aperture": 2.0}}"#).unwrap_err();
        assert_eq!(e.stage(), Some(Stage::Config));
    }
}
