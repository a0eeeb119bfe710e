use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField2D;

/// `lambda / (2 NA)` at the plane where crosstalk is evaluated.
pub fn default_integration_radius(wavelength: f64, na: f64) -> f64 {
    wavelength / (2.0 * na)
}

fn check_targets(field: &ScalarField2D, targets: &[(f64, f64)], radius: f64) -> Result<()> {
    let cell = field.dx().max(field.dy());
    if !(radius >= cell * (1.0 - 1e-9)) {
        return Err(Error::InvalidInput(format!(
            "integration radius {radius:.3e} m is below one grid cell ({cell:.3e} m)"
        )));
    }
    for (k, &(x, y)) in targets.iter().enumerate() {
        if !field.contains(x, y) {
            return Err(Error::TargetOutOfGrid { index: k, x, y });
        }
    }
    Ok(())
}

/// Row `i` of the crosstalk matrix: `10 log10(P_j / P_i)` for the field of channel `i`,
/// with `P_k` the power within `radius` of target `k`. The diagonal is exactly 0 dB.
pub fn crosstalk_row(field: &ScalarField2D, i: usize, targets: &[(f64, f64)], radius: f64) -> Result<Vec<f64>> {
    check_targets(field, targets, radius)?;
    if i >= targets.len() {
        return Err(Error::InvalidInput(format!("channel {i} has no target")));
    }
    let powers: Vec<f64> = targets.iter().map(|&(x, y)| field.disc_power(x, y, radius)).collect();
    let own = powers[i];
    if !(own > 0.0) {
        return Err(Error::InvalidInput(format!(
            "channel {i} delivers no power to its own target"
        )));
    }
    Ok(powers
        .iter()
        .enumerate()
        .map(|(j, p)| if j == i { 0.0 } else { 10.0 * (p / own).log10() })
        .collect())
}

/// Full matrix from one single-channel field per target.
pub fn crosstalk_matrix(fields: &[ScalarField2D], targets: &[(f64, f64)], radius: f64) -> Result<Vec<Vec<f64>>> {
    if fields.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} channel fields for {} targets",
            fields.len(),
            targets.len()
        )));
    }
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| crosstalk_row(f, i, targets, radius))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub x: f64,
    pub y: f64,
    /// Intensity at the peak sample.
    pub intensity: f64,
}

/// Brightest sample within `half_window` (in x) of each approximate position.
pub fn local_peaks(field: &ScalarField2D, approx_x: &[f64], half_window: f64) -> Vec<Peak> {
    approx_x
        .iter()
        .map(|&xc| {
            let mut best = Peak {
                x: xc,
                y: 0.0,
                intensity: f64::NEG_INFINITY,
            };
            for ((i, j), c) in field.samples().indexed_iter() {
                let x = field.x(i);
                if (x - xc).abs() > half_window {
                    continue;
                }
                let v = c.norm_sqr();
                if v > best.intensity {
                    best = Peak {
                        x,
                        y: field.y(j),
                        intensity: v,
                    };
                }
            }
            best
        })
        .collect()
}

/// Per-channel peaks and the crosstalk matrix. Entries below the representable range
/// (no power reached the target) serialise as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamTrainSummary {
    pub peak_positions: Vec<(f64, f64)>,
    pub peak_powers: Vec<f64>,
    pub integration_radius: f64,
    pub crosstalk_db: Vec<Vec<Option<f64>>>,
    /// Largest entry adjacent to the diagonal.
    pub worst_nearest_neighbor_db: Option<f64>,
}

impl BeamTrainSummary {
    pub fn new(peaks: &[Peak], peak_powers: Vec<f64>, integration_radius: f64, matrix: &[Vec<f64>]) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        let n = matrix.len();
        let mut worst: Option<f64> = None;
        for (i, row) in matrix.iter().enumerate() {
            for j in [i.wrapping_sub(1), i + 1] {
                if j < n {
                    let v = row[j];
                    worst = Some(worst.map_or(v, |w| w.max(v)));
                }
            }
        }
        Self {
            peak_positions: peaks.iter().map(|p| (p.x, p.y)).collect(),
            peak_powers,
            integration_radius,
            crosstalk_db: matrix.iter().map(|r| r.iter().map(|&v| finite(v)).collect()).collect(),
            worst_nearest_neighbor_db: worst.and_then(finite),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn gaussian_at(x0: f64, w: f64) -> ScalarField2D {
        let (n, d) = (201, 0.05e-6);
        let o = ScalarField2D::centered_origin(n, n, d, d);
        ScalarField2D::from_fn(n, n, d, d, o, 650e-9, |x, y| {
            Complex64::new((-((x - x0).powi(2) + y * y) / (w * w)).exp(), 0.0)
        })
        .unwrap()
    }

    #[test]
    fn coincident_targets_give_zero() {
        let f = gaussian_at(0.0, 1e-6);
        let row = crosstalk_row(&f, 0, &[(0.0, 0.0), (0.0, 0.0)], 0.2e-6).unwrap();
        assert_eq!(row, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_outside_targets_and_small_radius() {
        let f = gaussian_at(0.0, 1e-6);
        assert!(matches!(
            crosstalk_row(&f, 0, &[(0.0, 0.0), (1e-3, 0.0)], 0.2e-6),
            Err(Error::TargetOutOfGrid { index: 1, .. })
        ));
        assert!(crosstalk_row(&f, 0, &[(0.0, 0.0)], 0.01e-6).is_err());
    }

    #[test]
    fn summary_collects_neighbours() {
        let m = vec![
            vec![0.0, -60.0, f64::NEG_INFINITY],
            vec![-55.0, 0.0, -70.0],
            vec![-80.0, -65.0, 0.0],
        ];
        let s = BeamTrainSummary::new(&[], vec![], 1e-6, &m);
        assert_eq!(s.worst_nearest_neighbor_db, Some(-55.0));
        assert_eq!(s.crosstalk_db[0][2], None);
    }
}
