use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft_frequency, Fft2};
use crate::field::ScalarField2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImagingModel {
    /// Fourier-plane hard circular pupil, then a uniform coordinate scaling.
    #[default]
    Ideal4fWithPupil,
}

/// Imaging from the facet plane (object) to the ion plane (image).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingSystemSpec {
    /// Lateral magnification magnitude.
    pub magnification: f64,
    /// Object-side numerical aperture.
    pub numerical_aperture: f64,
    #[serde(default)]
    pub model: ImagingModel,
}

impl ImagingSystemSpec {
    pub fn new(magnification: f64, numerical_aperture: f64) -> Result<Self> {
        let s = Self {
            magnification,
            numerical_aperture,
            model: ImagingModel::Ideal4fWithPupil,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnification > 0.0 && self.magnification.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "magnification must be positive, got {}",
                self.magnification
            )));
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "numerical aperture must lie in (0, 1], got {}",
                self.numerical_aperture
            )));
        }
        Ok(())
    }

    /// Image-side numerical aperture, capped at 1.
    pub fn image_na(&self) -> f64 {
        (self.numerical_aperture / self.magnification).min(1.0)
    }
}

/// Coarsest object-plane sample spacing accepted for a given wavelength and NA.
pub fn max_sampling_step(wavelength: f64, na: f64) -> f64 {
    wavelength / (4.0 * na)
}

/// Low-pass the field through a hard pupil of radius `NA / lambda` in spatial frequency,
/// then map object coordinates `x` to image coordinates `M x`. Amplitudes are divided by
/// `M` so that power is unchanged apart from what the pupil removes.
pub fn image_field(field: &ScalarField2D, sys: &ImagingSystemSpec) -> Result<ScalarField2D> {
    sys.validate()?;
    let lambda = field.wavelength();
    let na = sys.numerical_aperture;
    let limit = max_sampling_step(lambda, na) * (1.0 + 1e-9);
    if field.dx() > limit || field.dy() > limit {
        return Err(Error::Sampling(format!(
            "grid step {:.3e} x {:.3e} m exceeds lambda/(4 NA) = {:.3e} m",
            field.dx(),
            field.dy(),
            limit
        )));
    }
    if field.nx() < 2 || field.ny() < 2 {
        return Err(Error::InvalidGrid("imaging needs at least a 2x2 grid".into()));
    }
    // Zero-pad to twice the size so the pupil acts as a linear, not circular, filter;
    // otherwise ringing from edge channels wraps onto the far side of the grid.
    let (nx, ny) = (field.nx(), field.ny());
    let (px, py) = (2 * nx, 2 * ny);
    let fft = Fft2::new(px, py);
    let mut spec = ndarray::Array2::<num_complex::Complex64>::zeros((px, py));
    spec.slice_mut(ndarray::s![..nx, ..ny]).assign(field.samples());
    fft.forward(&mut spec);
    let cut2 = (na / lambda) * (na / lambda);
    let fy: Vec<f64> = (0..py).map(|l| fft_frequency(l, py, field.dy())).collect();
    for k in 0..px {
        let fx = fft_frequency(k, px, field.dx());
        for (l, f) in fy.iter().enumerate() {
            if fx * fx + f * f > cut2 {
                spec[[k, l]] = num_complex::Complex64::new(0.0, 0.0);
            }
        }
    }
    fft.inverse(&mut spec);
    let mut spec = spec.slice(ndarray::s![..nx, ..ny]).to_owned();
    let m = sys.magnification;
    spec.mapv_inplace(|c| c / m);
    let (ox, oy) = field.origin();
    ScalarField2D::new(spec, field.dx() * m, field.dy() * m, (ox * m, oy * m), lambda)
}
