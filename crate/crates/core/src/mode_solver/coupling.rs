//! Power transfer between two identical parallel guides from their supermode splitting.

use serde::{Deserialize, Serialize};

use super::geometry::{CoreRect, Parity};
use super::{solve_structure, GuidedMode, SolverOptions, Structure};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEstimate {
    pub n_even: f64,
    pub n_odd: f64,
    /// Coupling coefficient `pi (n_even - n_odd) / lambda`, 1/m.
    pub kappa: f64,
}

impl CouplingEstimate {
    /// Fraction of power transferred after `length` of parallel run.
    pub fn power_fraction(&self, length: f64) -> f64 {
        (self.kappa * length).sin().powi(2)
    }

    /// Length for complete transfer.
    pub fn coupling_length(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 / self.kappa
    }
}

/// Even and odd supermodes of two copies of `mode`'s guide placed side by side along x,
/// `separation` apart edge to edge, solved on a grid with the same spacing and margin.
pub fn coupled_pair(mode: &GuidedMode, separation: f64, opts: &SolverOptions) -> Result<CouplingEstimate> {
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "separation must be positive, got {separation}"
        )));
    }
    let g = mode.geometry;
    g.validate()?;
    let spec = mode.grid.spec_for(g.core_width, g.core_thickness);
    let total = 2.0 * g.core_width + separation;
    let grid = spec.grid_for(total, g.core_thickness)?;
    let offset = 0.5 * (g.core_width + separation);
    let core = |cx: f64| CoreRect {
        cx,
        cy: 0.0,
        width: g.core_width,
        height: g.core_thickness,
    };
    let structure = Structure {
        cores: vec![core(-offset), core(offset)],
        n_core: g.n_core,
        n_clad: g.n_clad,
        wavelength: g.wavelength,
        footprint: (total, g.core_thickness),
    };
    let solve = |parity: Parity| -> Result<f64> {
        let o = SolverOptions {
            parity_x: parity,
            refinement_tolerance: None,
            ..*opts
        };
        solve_structure(&structure, &grid, mode.polarization, 1, &o, &[])?
            .first()
            .map(|r| r.value.sqrt())
            .ok_or(Error::ModeNotGuided { width: g.core_width })
    };
    let n_even = solve(Parity::Even)?;
    let n_odd = solve(Parity::Odd)?;
    Ok(CouplingEstimate {
        n_even,
        n_odd,
        kappa: std::f64::consts::PI * (n_even - n_odd) / g.wavelength,
    })
}

/// `sin^2(kappa L)` for two identical guides `separation` apart over `interaction_length`.
pub fn coupled_pair_crosstalk(
    mode: &GuidedMode,
    separation: f64,
    interaction_length: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    if !(interaction_length >= 0.0 && interaction_length.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "interaction length must be non-negative, got {interaction_length}"
        )));
    }
    Ok(coupled_pair(mode, separation, opts)?.power_fraction(interaction_length))
}
