//! Inverse-taper spot-size converter: mode expansion versus tip width and a local
//! adiabaticity criterion along the taper.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode_solver::{
    solve_modes_warm, GridSpec, ModeFieldDiameter, Polarization, SimulationGrid, SolverOptions, WaveguideGeometry,
};
use crate::units::serde_length;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaperShape {
    #[default]
    Linear,
}

/// A taper from `start_width` (routing side) down to `end_width` (facet side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperProfile {
    #[serde(with = "serde_length")]
    pub start_width: f64,
    #[serde(with = "serde_length")]
    pub end_width: f64,
    #[serde(with = "serde_length")]
    pub length: f64,
    #[serde(default)]
    pub shape: TaperShape,
    pub n_segments: usize,
}

impl Default for TaperProfile {
    /// 500 nm to 125 nm over 100 um.
    fn default() -> Self {
        Self {
            start_width: 500e-9,
            end_width: 125e-9,
            length: 100e-6,
            shape: TaperShape::Linear,
            n_segments: 64,
        }
    }
}

impl TaperProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.end_width > 0.0 && self.start_width > self.end_width && self.start_width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "taper needs start_width > end_width > 0, got {} -> {}",
                self.start_width, self.end_width
            )));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "taper length must be positive, got {}",
                self.length
            )));
        }
        if self.n_segments < 8 {
            return Err(Error::InvalidInput(format!(
                "taper needs at least 8 segments, got {}",
                self.n_segments
            )));
        }
        Ok(())
    }

    /// Core width at distance `z` from the wide end.
    pub fn width_at(&self, z: f64) -> f64 {
        match self.shape {
            TaperShape::Linear => {
                let t = (z / self.length).clamp(0.0, 1.0);
                self.start_width + t * (self.end_width - self.start_width)
            }
        }
    }

    /// Local half-angle `|dw/dz| / 2` at `z`.
    pub fn half_angle_at(&self, _z: f64) -> f64 {
        match self.shape {
            TaperShape::Linear => (self.start_width - self.end_width).abs() / (2.0 * self.length),
        }
    }

    /// Segment centre positions along the taper.
    pub fn segment_centres(&self) -> Vec<f64> {
        let dz = self.length / self.n_segments as f64;
        (0..self.n_segments).map(|k| (k as f64 + 0.5) * dz).collect()
    }
}

/// Fundamental-mode data at one width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthSample {
    pub width: f64,
    pub n_eff: f64,
    pub mfd_x: f64,
    pub mfd_y: f64,
}

/// MFD of the fundamental mode of `pol` at `width`, on a grid built from `spec`.
pub fn mfd_vs_width(
    template: &WaveguideGeometry,
    width: f64,
    spec: &GridSpec,
    pol: Polarization,
    opts: &SolverOptions,
) -> Result<ModeFieldDiameter> {
    let geom = template.with_width(width);
    geom.validate()?;
    let grid = spec.grid_around(&geom)?;
    let mode = solve_modes_warm(&geom, &grid, pol, 1, opts, &[])?
        .into_iter()
        .next()
        .ok_or(Error::ModeNotGuided { width })?;
    Ok(mode.mode_field_diameter())
}

/// Fundamental mode at each width, all on one grid sized for the widest core so that
/// each solve can start from its neighbour's field.
pub fn sweep_widths(
    template: &WaveguideGeometry,
    widths: &[f64],
    spec: &GridSpec,
    pol: Polarization,
    opts: &SolverOptions,
) -> Result<Vec<WidthSample>> {
    let widest = widths.iter().copied().fold(0.0f64, f64::max);
    if widths.is_empty() || !(widest > 0.0) {
        return Err(Error::InvalidInput(
            "width sweep needs at least one positive width".into(),
        ));
    }
    let grid: SimulationGrid = spec.grid_around(&template.with_width(widest))?;
    let mut warm: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::with_capacity(widths.len());
    for &w in widths {
        let geom = template.with_width(w);
        let mode = solve_modes_warm(&geom, &grid, pol, 1, opts, &warm)?
            .into_iter()
            .next()
            .ok_or(Error::ModeNotGuided { width: w })?;
        let mfd = mode.mode_field_diameter();
        out.push(WidthSample {
            width: w,
            n_eff: mode.n_eff,
            mfd_x: mfd.mfd_x,
            mfd_y: mfd.mfd_y,
        });
        warm = vec![mode.vector()];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentCheck {
    /// Distance of the segment centre from the wide end.
    pub position: f64,
    pub width: f64,
    pub half_angle: f64,
    pub n_eff: f64,
    /// `(n_eff - n_clad) * width / lambda`, the largest half-angle the local mode tolerates.
    pub limit: f64,
    /// `half_angle / limit`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticityReport {
    pub pass: bool,
    pub safety_factor: f64,
    pub worst_ratio: f64,
    pub worst_position: f64,
    pub segments: Vec<SegmentCheck>,
}

/// Compare the local half-angle with the local mode's beat-length criterion at each
/// segment centre. Passes when `half_angle <= alpha * limit` in every segment.
pub fn adiabaticity_check(
    profile: &TaperProfile,
    template: &WaveguideGeometry,
    spec: &GridSpec,
    pol: Polarization,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<AdiabaticityReport> {
    profile.validate()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "safety factor must be positive, got {alpha}"
        )));
    }
    let centres = profile.segment_centres();
    let widths: Vec<f64> = centres.iter().map(|&z| profile.width_at(z)).collect();
    let samples = sweep_widths(template, &widths, spec, pol, opts)?;
    let segments: Vec<SegmentCheck> = centres
        .iter()
        .zip(&samples)
        .map(|(&z, s)| {
            let half_angle = profile.half_angle_at(z);
            let limit = (s.n_eff - template.n_clad) * s.width / template.wavelength;
            SegmentCheck {
                position: z,
                width: s.width,
                half_angle,
                n_eff: s.n_eff,
                limit,
                ratio: half_angle / limit,
            }
        })
        .collect();
    let worst = segments
        .iter()
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .copied()
        .expect("at least 8 segments");
    Ok(AdiabaticityReport {
        pass: segments.iter().all(|s| s.ratio <= alpha),
        safety_factor: alpha,
        worst_ratio: worst.ratio,
        worst_position: worst.position,
        segments,
    })
}
