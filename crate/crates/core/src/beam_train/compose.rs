use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField2D;

/// Largest fraction of a channel's power allowed to fall outside the facet grid.
pub const OVERFLOW_TOLERANCE: f64 = 1e-6;

/// How channel fields are summed at the facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    /// Intensities add; the composed field carries `sqrt(sum I)` with zero phase.
    #[default]
    Incoherent,
    /// Complex amplitudes add.
    Coherent,
}

/// A uniform sampling lattice `origin + (i*dx, j*dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: (f64, f64),
}

impl PlaneGrid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, origin: (f64, f64)) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "plane grid needs at least 2x2 samples, got {nx}x{ny}"
            )));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacings must be positive, got dx={dx}, dy={dy}"
            )));
        }
        Ok(Self { nx, ny, dx, dy, origin })
    }

    /// A grid centred on `(0, 0)` with sample spacing `step`, wide enough to hold every
    /// position in `xs` plus `pad_x` on either side and `half_height` above and below.
    /// Sample counts are rounded up to even numbers.
    pub fn covering(xs: &[f64], pad_x: f64, half_height: f64, step: f64) -> Result<Self> {
        let reach = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())) + pad_x;
        let even = |half: f64| -> usize {
            let n = (2.0 * half / step).ceil() as usize + 1;
            n + n % 2
        };
        let nx = even(reach);
        let ny = even(half_height);
        let origin = ScalarField2D::centered_origin(nx, ny, step, step);
        Self::new(nx, ny, step, step, origin)
    }

    /// Lattice of the same extent as an existing field.
    pub fn of(field: &ScalarField2D) -> Self {
        Self {
            nx: field.nx(),
            ny: field.ny(),
            dx: field.dx(),
            dy: field.dy(),
            origin: field.origin(),
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        // Each sample owns a cell of width dx centred on it.
        (
            self.origin.0 - 0.5 * self.dx,
            self.origin.0 + (self.nx as f64 - 0.5) * self.dx,
            self.origin.1 - 0.5 * self.dy,
            self.origin.1 + (self.ny as f64 - 0.5) * self.dy,
        )
    }
}

/// Channels sharing one mode profile, translated along x to `positions` in the facet
/// plane (y = 0).
#[derive(Debug, Clone)]
pub struct ChannelLayout {
    pub positions: Vec<f64>,
    pub mode: ScalarField2D,
    /// Power launched into each channel, W.
    pub powers: Vec<f64>,
}

impl ChannelLayout {
    pub fn new(positions: Vec<f64>, mode: ScalarField2D, powers: Vec<f64>) -> Result<Self> {
        let l = Self {
            positions,
            mode,
            powers,
        };
        l.validate()?;
        Ok(l)
    }

    /// Equal power in every channel.
    pub fn uniform(positions: Vec<f64>, mode: ScalarField2D, power: f64) -> Result<Self> {
        let powers = vec![power; positions.len()];
        Self::new(positions, mode, powers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::InvalidInput("layout has no channels".into()));
        }
        if self.positions.len() != self.powers.len() {
            return Err(Error::InvalidInput(format!(
                "{} positions but {} powers",
                self.positions.len(),
                self.powers.len()
            )));
        }
        if !self.positions.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput(
                "channel positions must be strictly increasing".into(),
            ));
        }
        if let Some(p) = self.powers.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "channel power must be non-negative, got {p}"
            )));
        }
        if !(self.mode.power() > 0.0) {
            return Err(Error::InvalidInput("channel mode carries no power".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// The layout restricted to one channel.
    pub fn single(&self, channel: usize) -> ChannelLayout {
        ChannelLayout {
            positions: vec![self.positions[channel]],
            mode: self.mode.clone(),
            powers: vec![self.powers[channel]],
        }
    }
}

/// Fraction of the mode's power that would land outside `grid` after shifting by `shift`.
fn clipped_fraction(mode: &ScalarField2D, shift: f64, grid: &PlaneGrid) -> f64 {
    let (x0, x1, y0, y1) = grid.bounds();
    let total: f64 = mode.samples().iter().map(|c| c.norm_sqr()).sum();
    let mut outside = 0.0;
    for ((i, j), c) in mode.samples().indexed_iter() {
        let x = mode.x(i) + shift;
        let y = mode.y(j);
        if x < x0 || x > x1 || y < y0 || y > y1 {
            outside += c.norm_sqr();
        }
    }
    outside / total
}

/// All channels of `layout` resampled onto `grid` and summed according to `how`.
pub fn compose_facet_field(layout: &ChannelLayout, grid: &PlaneGrid, how: Combination) -> Result<ScalarField2D> {
    layout.validate()?;
    let mode = &layout.mode;
    let mode_power = mode.power();
    let mut out = ScalarField2D::zeros(grid.nx, grid.ny, grid.dx, grid.dy, grid.origin, mode.wavelength())?;
    let mut intensity = match how {
        Combination::Incoherent => Some(ndarray::Array2::<f64>::zeros((grid.nx, grid.ny))),
        Combination::Coherent => None,
    };
    let (mx0, mx1, my0, my1) = mode.bounds();
    for (k, (&xc, &p)) in layout.positions.iter().zip(&layout.powers).enumerate() {
        let clipped = clipped_fraction(mode, xc, grid);
        if clipped > OVERFLOW_TOLERANCE {
            return Err(Error::GridOverflow { channel: k, clipped });
        }
        let amp = (p / mode_power).sqrt();
        // Only samples under the translated mode's footprint can be non-zero.
        let i_lo = (((xc + mx0 - grid.origin.0) / grid.dx).floor().max(0.0)) as usize;
        let i_hi = ((((xc + mx1 - grid.origin.0) / grid.dx).ceil()) as isize).clamp(-1, grid.nx as isize - 1);
        let j_lo = (((my0 - grid.origin.1) / grid.dy).floor().max(0.0)) as usize;
        let j_hi = ((((my1 - grid.origin.1) / grid.dy).ceil()) as isize).clamp(-1, grid.ny as isize - 1);
        if i_hi < 0 || j_hi < 0 {
            continue;
        }
        for i in i_lo..=i_hi as usize {
            let x = grid.origin.0 + i as f64 * grid.dx - xc;
            for j in j_lo..=j_hi as usize {
                let y = grid.origin.1 + j as f64 * grid.dy;
                let v = mode.interpolate(x, y) * amp;
                match intensity.as_mut() {
                    Some(acc) => acc[[i, j]] += v.norm_sqr(),
                    None => out.samples_mut()[[i, j]] += v,
                }
            }
        }
    }
    if let Some(acc) = intensity {
        out.samples_mut()
            .zip_mut_with(&acc, |s, &v| *s = Complex64::new(v.sqrt(), 0.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_mode(w: f64, d: f64, n: usize) -> ScalarField2D {
        let o = ScalarField2D::centered_origin(n, n, d, d);
        let mut f = ScalarField2D::from_fn(n, n, d, d, o, 650e-9, |x, y| {
            Complex64::new((-(x * x + y * y) / (w * w)).exp(), 0.0)
        })
        .unwrap();
        let p = f.power();
        f.scale(1.0 / p.sqrt());
        f
    }

    #[test]
    fn single_channel_on_own_grid_is_identity() {
        let m = gaussian_mode(1e-6, 0.1e-6, 61);
        let layout = ChannelLayout::uniform(vec![0.0], m.clone(), 1.0).unwrap();
        let out = compose_facet_field(&layout, &PlaneGrid::of(&m), Combination::Coherent).unwrap();
        for (a, b) in out.samples().iter().zip(m.samples().iter()) {
            assert!((a - b).norm() < 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn overflow_is_reported() {
        let m = gaussian_mode(1e-6, 0.1e-6, 61);
        let grid = PlaneGrid::covering(&[0.0], 1.0e-6, 3e-6, 0.1e-6).unwrap();
        let layout = ChannelLayout::uniform(vec![0.0], m, 1.0).unwrap();
        assert!(matches!(
            compose_facet_field(&layout, &grid, Combination::Incoherent),
            Err(Error::GridOverflow { channel: 0, .. })
        ));
    }

    #[test]
    fn layout_validation() {
        let m = gaussian_mode(1e-6, 0.1e-6, 21);
        assert!(ChannelLayout::uniform(vec![1.0, 0.0], m.clone(), 1.0).is_err());
        assert!(ChannelLayout::new(vec![0.0], m.clone(), vec![-1.0]).is_err());
        assert!(ChannelLayout::new(vec![0.0, 1.0], m, vec![1.0]).is_err());
    }
}
