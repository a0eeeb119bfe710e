//! Global settings shared by every command: constants, material indices, default
//! tolerances and output conventions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{silica_650, silicon_nitride_650, MaterialIndex, PhysicalConstants};
use crate::error::{Error, Result};

/// How dB figures are formed. Only intensity ratios are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbConvention {
    /// `10 log10(I / I_ref)`.
    #[default]
    IntensityRatio10Log10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Table,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            other => Err(Error::Parse(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Eigen-residual tolerance of the mode solver.
    pub mode_residual: f64,
    /// Bracket width for cutoff searches, m.
    pub cutoff_width: f64,
    /// Largest change in fundamental `n_eff` accepted by the grid self-check.
    pub grid_refinement: f64,
    /// Ion-chain force residual.
    pub ion_force: f64,
    pub deconvolution_iterations: usize,
    pub deconvolution_residual: f64,
    /// Relative tolerance for design-relation consistency.
    pub design_consistency: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mode_residual: 1e-9,
            cutoff_width: 5e-9,
            grid_refinement: 1e-3,
            ion_force: 1e-12,
            deconvolution_iterations: 500,
            deconvolution_residual: 1e-6,
            design_consistency: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalConfig {
    pub constants: PhysicalConstants,
    pub core_material: MaterialIndex,
    pub cladding_material: MaterialIndex,
    pub tolerances: Tolerances,
    pub db_convention: DbConvention,
    /// The constant `c` in `NA = lambda / (c w)`.
    pub na_constant: f64,
    pub output_format: OutputFormat,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::CODATA_2018,
            core_material: silicon_nitride_650(),
            cladding_material: silica_650(),
            tolerances: Tolerances::default(),
            db_convention: DbConvention::default(),
            na_constant: std::f64::consts::PI,
            output_format: OutputFormat::default(),
        }
    }
}

impl GlobalConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("global config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        for m in [&self.core_material, &self.cladding_material] {
            if !(m.index >= 1.0 && m.index.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{}: index must be >= 1, got {}",
                    m.name, m.index
                )));
            }
            if !(m.wavelength > 0.0 && m.wavelength.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{}: index needs a positive validity wavelength",
                    m.name
                )));
            }
        }
        let c = &self.constants;
        for (name, v) in [
            ("elementary_charge", c.elementary_charge),
            ("vacuum_permittivity", c.vacuum_permittivity),
            ("atomic_mass_unit", c.atomic_mass_unit),
            ("electron_mass", c.electron_mass),
            ("speed_of_light", c.speed_of_light),
            ("na_constant", self.na_constant),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        let t = &self.tolerances;
        if !(t.mode_residual > 0.0 && t.cutoff_width > 0.0 && t.grid_refinement > 0.0 && t.ion_force > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Material indices, warning-free only when they were tabulated at `wavelength`.
    pub fn indices_at(&self, wavelength: f64) -> Result<(f64, f64)> {
        for m in [&self.core_material, &self.cladding_material] {
            if (m.wavelength - wavelength).abs() > 1e-3 * wavelength {
                return Err(Error::InvalidInput(format!(
                    "{} index is tabulated at {:.1} nm, not {:.1} nm; supply indices explicitly",
                    m.name,
                    m.wavelength * 1e9,
                    wavelength * 1e9
                )));
            }
        }
        Ok((self.core_material.index, self.cladding_material.index))
    }
}
