use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::serde_length;

/// Smallest cladding margin allowed around the core on each side.
pub const MIN_MARGIN: f64 = 2e-6;

/// A rectangular core buried in a uniform cladding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideGeometry {
    #[serde(with = "serde_length")]
    pub core_width: f64,
    #[serde(with = "serde_length")]
    pub core_thickness: f64,
    pub n_core: f64,
    pub n_clad: f64,
    #[serde(with = "serde_length")]
    pub wavelength: f64,
}

impl WaveguideGeometry {
    /// 500 nm x 150 nm nitride in oxide at 650 nm.
    pub fn routing_default() -> Self {
        Self {
            core_width: 500e-9,
            core_thickness: 150e-9,
            n_core: 2.02,
            n_clad: 1.457,
            wavelength: 650e-9,
        }
    }

    pub fn with_width(mut self, width: f64) -> Self {
        self.core_width = width;
        self
    }

    /// Checks dimensions and indices. Equal core and cladding indices are allowed
    /// and simply support no guided modes.
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.core_width) || !pos(self.core_thickness) {
            return Err(Error::InvalidGeometry(format!(
                "core dimensions must be positive, got {} x {} m",
                self.core_width, self.core_thickness
            )));
        }
        if !pos(self.wavelength) {
            return Err(Error::InvalidGeometry(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        if !(self.n_clad >= 1.0 && self.n_clad.is_finite() && self.n_core.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "cladding index must be >= 1, got {}",
                self.n_clad
            )));
        }
        if self.n_core < self.n_clad {
            return Err(Error::InvalidGeometry(format!(
                "core index {} is below cladding index {}",
                self.n_core, self.n_clad
            )));
        }
        Ok(())
    }

    pub fn k0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    /// Dominant electric field along the core width (x).
    TE,
    /// Dominant electric field along the core thickness (y).
    TM,
}

impl std::fmt::Display for Polarization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Polarization::TE => "TE",
            Polarization::TM => "TM",
        })
    }
}

impl std::str::FromStr for Polarization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TE" => Ok(Polarization::TE),
            "TM" => Ok(Polarization::TM),
            _ => Err(Error::Parse(format!("unknown polarization `{s}` (expected TE or TM)"))),
        }
    }
}

/// Field symmetry under `x -> -x` or `y -> -y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Parity {
    #[default]
    Any,
    Even,
    Odd,
}

/// Resolution and margin used to build a [`SimulationGrid`] around a given footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(with = "serde_length")]
    pub dx: f64,
    #[serde(with = "serde_length")]
    pub dy: f64,
    #[serde(with = "serde_length")]
    pub margin: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dx: 10e-9,
            dy: 10e-9,
            margin: MIN_MARGIN,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dx.is_finite() && self.dy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "resolution must be positive, got {} x {}",
                self.dx, self.dy
            )));
        }
        if !(self.margin >= MIN_MARGIN * (1.0 - 1e-9)) {
            return Err(Error::InvalidGrid(format!(
                "cladding margin {} m is below the {} m minimum",
                self.margin, MIN_MARGIN
            )));
        }
        Ok(())
    }

    /// Grid enclosing a `width x height` footprint centred on the origin.
    pub fn grid_for(&self, width: f64, height: f64) -> Result<SimulationGrid> {
        self.validate()?;
        let nx = fft_friendly(((width + 2.0 * self.margin) / self.dx).round().max(1.0) as usize);
        let ny = fft_friendly(((height + 2.0 * self.margin) / self.dy).round().max(1.0) as usize);
        SimulationGrid::new(nx as f64 * self.dx, ny as f64 * self.dy, nx, ny)
    }

    pub fn grid_around(&self, geom: &WaveguideGeometry) -> Result<SimulationGrid> {
        self.grid_for(geom.core_width, geom.core_thickness)
    }

    /// Half-spacing copy used for the refinement self-check.
    pub fn refined(&self) -> Self {
        Self {
            dx: self.dx / 2.0,
            dy: self.dy / 2.0,
            margin: self.margin,
        }
    }
}

/// Smallest `m >= n` with `m + 1` free of prime factors above 7.
///
/// Sine transforms on `m` points use FFTs of length `2 (m + 1)`; a large prime factor
/// there makes them several times slower. Growing the grid only widens the cladding.
pub fn fft_friendly(n: usize) -> usize {
    let smooth = |mut k: usize| {
        for p in [2, 3, 5, 7] {
            while k.is_multiple_of(p) {
                k /= p;
            }
        }
        k == 1
    };
    (n..).find(|&m| smooth(m + 1)).unwrap_or(n)
}

/// Fewest cells allowed along either axis.
pub const MIN_CELLS: usize = 16;

/// Cell-centred rectangular grid, symmetric about the origin, with zero-field walls.
///
/// Cell `(i, j)` is centred at `((i + 0.5) dx - X/2, (j + 0.5) dy - Y/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationGrid {
    pub x_extent: f64,
    pub y_extent: f64,
    pub nx: usize,
    pub ny: usize,
}

impl SimulationGrid {
    pub fn new(x_extent: f64, y_extent: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(x_extent > 0.0 && y_extent > 0.0 && x_extent.is_finite() && y_extent.is_finite())
            || nx < MIN_CELLS
            || ny < MIN_CELLS
        {
            return Err(Error::InvalidGrid(format!(
                "need positive extents and at least {MIN_CELLS} cells per axis, got {x_extent} x {y_extent} m, {nx} x {ny}"
            )));
        }
        Ok(Self {
            x_extent,
            y_extent,
            nx,
            ny,
        })
    }

    pub fn dx(&self) -> f64 {
        self.x_extent / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.y_extent / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx() - self.x_extent / 2.0
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy() - self.y_extent / 2.0
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Check that a centred `width x height` footprint keeps at least `MIN_MARGIN` of cladding on every side.
    pub fn check_encloses(&self, width: f64, height: f64) -> Result<()> {
        let mx = (self.x_extent - width) / 2.0;
        let my = (self.y_extent - height) / 2.0;
        let tol = 1e-9 * MIN_MARGIN + 0.5 * self.dx().max(self.dy());
        if mx + tol < MIN_MARGIN || my + tol < MIN_MARGIN {
            return Err(Error::InvalidGrid(format!(
                "grid {} x {} m leaves margins {mx:.3e} / {my:.3e} m around the core, {MIN_MARGIN} m required",
                self.x_extent, self.y_extent
            )));
        }
        Ok(())
    }

    /// Same extents, half the spacing.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx,
            ny: 2 * self.ny,
            ..*self
        }
    }

    /// The grid spec that reproduces this grid's spacing and margins for a given footprint.
    pub fn spec_for(&self, width: f64, height: f64) -> GridSpec {
        let mx = (self.x_extent - width) / 2.0;
        let my = (self.y_extent - height) / 2.0;
        GridSpec {
            dx: self.dx(),
            dy: self.dy(),
            margin: mx.min(my).max(MIN_MARGIN),
        }
    }
}

/// Axis-aligned rectangle of core material, described by its centre and size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreRect {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

/// Relative permittivity on the grid, with partially covered cells averaged by area.
pub fn permittivity(grid: &SimulationGrid, cores: &[CoreRect], n_core: f64, n_clad: f64) -> Vec<f64> {
    let ec = n_core * n_core;
    let el = n_clad * n_clad;
    let (dx, dy) = (grid.dx(), grid.dy());
    let cover = |c: f64, h: f64, lo: f64, hi: f64| ((c + h / 2.0).min(hi) - (c - h / 2.0).max(lo)).max(0.0) / h;
    let mut fx = vec![0.0; grid.nx];
    let mut fy = vec![0.0; grid.ny];
    let mut eps = vec![el; grid.len()];
    for r in cores {
        for (i, f) in fx.iter_mut().enumerate() {
            *f = cover(grid.x(i), dx, r.cx - r.width / 2.0, r.cx + r.width / 2.0);
        }
        for (j, f) in fy.iter_mut().enumerate() {
            *f = cover(grid.y(j), dy, r.cy - r.height / 2.0, r.cy + r.height / 2.0);
        }
        for i in 0..grid.nx {
            if fx[i] == 0.0 {
                continue;
            }
            for j in 0..grid.ny {
                if fy[j] > 0.0 {
                    eps[i * grid.ny + j] += fx[i] * fy[j] * (ec - el);
                }
            }
        }
    }
    eps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_symmetric_about_origin() {
        let g = GridSpec::default()
            .grid_around(&WaveguideGeometry::routing_default())
            .unwrap();
        // 450 x 415 cells rounded up to FFT-friendly sizes.
        assert_eq!(g.nx, 479);
        assert_eq!(g.ny, 419);
        for i in 0..g.nx {
            assert!((g.x(i) + g.x(g.nx - 1 - i)).abs() < 1e-15);
        }
        g.check_encloses(500e-9, 150e-9).unwrap();
        assert!(g.check_encloses(2e-6, 150e-9).is_err());
    }

    #[test]
    fn fft_friendly_sizes() {
        assert_eq!(fft_friendly(450), 479);
        assert_eq!(fft_friendly(1400), 1439);
        assert_eq!(fft_friendly(15), 15);
        assert_eq!(fft_friendly(16), 17);
    }

    #[test]
    fn permittivity_conserves_core_area() {
        let g = SimulationGrid::new(4.37e-6, 4.11e-6, 437, 411).unwrap();
        let r = CoreRect {
            cx: 0.013e-6,
            cy: -0.004e-6,
            width: 0.503e-6,
            height: 0.147e-6,
        };
        let eps = permittivity(&g, &[r], 2.0, 1.5);
        let excess: f64 = eps.iter().map(|e| e - 2.25).sum::<f64>() * g.dx() * g.dy();
        assert!((excess / ((4.0 - 2.25) * r.width * r.height) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn small_margin_is_rejected() {
        let spec = GridSpec {
            margin: 1e-6,
            ..GridSpec::default()
        };
        assert!(spec.grid_around(&WaveguideGeometry::routing_default()).is_err());
    }

    #[test]
    fn geometry_validation() {
        let mut g = WaveguideGeometry::routing_default();
        g.validate().unwrap();
        g.n_core = 1.4;
        assert!(g.validate().is_err());
        g.n_core = 1.457;
        g.validate().unwrap();
        g.core_width = 0.0;
        assert!(g.validate().is_err());
    }
}
