use serde::{Deserialize, Serialize};

use super::{Profile1D, ScanTrace};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeconvolutionOptions {
    pub iterations: usize,
    /// Relative L2 residual `|K u - d| / |d|` at which iteration stops early.
    pub tolerance: f64,
}

impl Default for DeconvolutionOptions {
    fn default() -> Self {
        Self {
            iterations: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deconvolved {
    pub profile: Profile1D,
    pub iterations: usize,
    pub residual: f64,
    /// False when the iteration cap was reached before the residual tolerance.
    pub converged: bool,
}

/// Weights of a unit-area top-hat of `width` on a lattice of spacing `step`: tap `k` is the
/// overlap of cell `[k - 1/2, k + 1/2] * step` with the slit, divided by the width.
pub fn top_hat_taps(width: f64, step: f64) -> Vec<f64> {
    let half = 0.5 * width;
    let m = (half / step + 0.5).ceil() as isize;
    let taps: Vec<f64> = (-m..=m)
        .map(|k| {
            let lo = (k as f64 - 0.5) * step;
            let hi = (k as f64 + 0.5) * step;
            (hi.min(half) - lo.max(-half)).max(0.0) / width
        })
        .collect();
    // Trim zero taps at the ends, keeping the kernel centred.
    let zeros = taps.iter().take_while(|t| **t == 0.0).count();
    taps[zeros..taps.len() - zeros].to_vec()
}

/// Convolution with a centred kernel, each output divided by the kernel mass that fell
/// inside the signal. A constant signal maps to itself.
struct Blur {
    taps: Vec<f64>,
    norm: Vec<f64>,
}

impl Blur {
    fn new(taps: Vec<f64>, n: usize) -> Self {
        let m = (taps.len() / 2) as isize;
        let norm = (0..n as isize)
            .map(|i| {
                (-m..=m)
                    .filter(|k| (0..n as isize).contains(&(i - k)))
                    .map(|k| taps[(k + m) as usize])
                    .sum()
            })
            .collect();
        Self { taps, norm }
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len() as isize;
        let m = (self.taps.len() / 2) as isize;
        for (i, o) in out.iter_mut().enumerate() {
            let i = i as isize;
            let mut acc = 0.0;
            for k in (-m).max(i - n + 1)..=m.min(i) {
                acc += self.taps[(k + m) as usize] * u[(i - k) as usize];
            }
            *o = acc / self.norm[i as usize];
        }
    }

    fn apply_adjoint(&self, r: &[f64], out: &mut [f64]) {
        let n = r.len() as isize;
        let m = (self.taps.len() / 2) as isize;
        for (j, o) in out.iter_mut().enumerate() {
            let j = j as isize;
            let mut acc = 0.0;
            for k in (-m).max(-j)..=m.min(n - 1 - j) {
                let i = (j + k) as usize;
                acc += self.taps[(k + m) as usize] * r[i] / self.norm[i];
            }
            *o = acc;
        }
    }
}

fn rel_residual(blurred: &[f64], data: &[f64]) -> f64 {
    let num: f64 = blurred.iter().zip(data).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = data.iter().map(|b| b * b).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Multiplicative (Richardson-Lucy) deconvolution with the slit top-hat.
pub fn deconvolve(trace: &ScanTrace) -> Result<Deconvolved> {
    deconvolve_with(trace, &DeconvolutionOptions::default())
}

pub fn deconvolve_with(trace: &ScanTrace, opts: &DeconvolutionOptions) -> Result<Deconvolved> {
    trace.validate()?;
    let d = &trace.values;
    let n = d.len();
    let blur = Blur::new(top_hat_taps(trace.slit_width, trace.step), n);
    let mut ones_adj = vec![0.0; n];
    blur.apply_adjoint(&vec![1.0; n], &mut ones_adj);

    let mut u = d.clone();
    let mut ku = vec![0.0; n];
    let mut ratio = vec![0.0; n];
    let mut corr = vec![0.0; n];
    blur.apply(&u, &mut ku);
    let mut residual = rel_residual(&ku, d);
    let mut iterations = 0;
    while iterations < opts.iterations && residual > opts.tolerance {
        for ((r, &k), &di) in ratio.iter_mut().zip(&ku).zip(d) {
            *r = if k > 0.0 { di / k } else { 0.0 };
        }
        blur.apply_adjoint(&ratio, &mut corr);
        for ((ui, c), a) in u.iter_mut().zip(&corr).zip(&ones_adj) {
            *ui *= c / a;
        }
        blur.apply(&u, &mut ku);
        residual = rel_residual(&ku, d);
        iterations += 1;
    }
    Ok(Deconvolved {
        profile: Profile1D {
            positions: trace.positions.clone(),
            values: u,
        },
        iterations,
        residual,
        converged: residual <= opts.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(values: Vec<f64>, width: f64) -> ScanTrace {
        ScanTrace {
            positions: (0..values.len()).map(|k| k as f64).collect(),
            values,
            slit_width: width,
            slit_height: 1.0,
            step: 1.0,
            noise_floor: None,
            modulation_hz: None,
        }
    }

    #[test]
    fn taps_have_unit_mass() {
        for (w, h) in [(5.0, 1.0), (4.0, 1.0), (2.5, 1.0), (0.5, 1.0)] {
            let t = top_hat_taps(w, h);
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15, "{w}");
            assert_eq!(t.len() % 2, 1);
        }
        assert_eq!(top_hat_taps(5.0, 1.0), vec![0.2; 5]);
        assert_eq!(top_hat_taps(4.0, 1.0), vec![0.125, 0.25, 0.25, 0.25, 0.125]);
    }

    #[test]
    fn adjoint_is_consistent() {
        let n = 17;
        let b = Blur::new(top_hat_taps(4.0, 1.0), n);
        let x: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..n).map(|k| (k as f64 * 0.91).cos()).collect();
        let (mut ax, mut aty) = (vec![0.0; n], vec![0.0; n]);
        b.apply(&x, &mut ax);
        b.apply_adjoint(&y, &mut aty);
        let l: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let r: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((l - r).abs() < 1e-12);
    }

    #[test]
    fn constant_trace_is_a_fixed_point() {
        let out = deconvolve(&trace(vec![3.0; 40], 5.0)).unwrap();
        assert!(out.converged);
        assert!(out.profile.values.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }
}
