//! Physical constants (CODATA 2018) and default material data.

use serde::{Deserialize, Serialize};

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Atomic mass of barium-138 in unified atomic mass units.
pub const BA138_ATOMIC_MASS_U: f64 = 137.905_247_2;

/// Mass of a singly ionised barium-138 ion in kg.
pub fn ba138_ion_mass() -> f64 {
    BA138_ATOMIC_MASS_U * ATOMIC_MASS_UNIT - ELECTRON_MASS
}

/// The constants table as a value, so it can be serialised into configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub elementary_charge: f64,
    pub vacuum_permittivity: f64,
    pub atomic_mass_unit: f64,
    pub electron_mass: f64,
    pub speed_of_light: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
        elementary_charge: ELEMENTARY_CHARGE,
        vacuum_permittivity: VACUUM_PERMITTIVITY,
        atomic_mass_unit: ATOMIC_MASS_UNIT,
        electron_mass: ELECTRON_MASS,
        speed_of_light: SPEED_OF_LIGHT,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}

/// A refractive index together with the wavelength it is valid at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialIndex {
    pub name: String,
    pub index: f64,
    /// Wavelength (m) at which `index` applies.
    pub wavelength: f64,
}

pub fn silicon_nitride_650() -> MaterialIndex {
    MaterialIndex {
        name: "Si3N4".into(),
        index: 2.02,
        wavelength: 650e-9,
    }
}

pub fn silica_650() -> MaterialIndex {
    MaterialIndex {
        name: "SiO2".into(),
        index: 1.457,
        wavelength: 650e-9,
    }
}

/// Simulated bend loss of the routing waveguide, dB per 90 degree bend. Budget constant only.
pub const BEND_LOSS_DB_PER_90: f64 = 0.1;

/// Measured straight-waveguide propagation loss, dB/cm. Budget constant only.
pub const PROPAGATION_LOSS_DB_PER_CM: f64 = 1.7;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ba_ion_mass_is_close_to_138_u() {
        let m = ba138_ion_mass() / ATOMIC_MASS_UNIT;
        assert!((m - 137.9047).abs() < 1e-3, "{m}");
    }
}
