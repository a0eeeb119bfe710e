//! Thin wrappers over `rustfft`: 2D complex transforms and a 2D type-I sine transform.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Plans for a 2D complex FFT of a fixed shape. Transforms are unnormalised.
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_x: planner.plan_fft_inverse(nx),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.fwd_x, &self.fwd_y);
    }

    /// Inverse transform including the `1/(nx*ny)` normalisation.
    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.inv_x, &self.inv_y);
        let s = 1.0 / (self.nx * self.ny) as f64;
        data.mapv_inplace(|c| c * s);
    }

    fn run(&self, data: &mut Array2<Complex64>, fx: &Arc<dyn Fft<f64>>, fy: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.dim(), (self.nx, self.ny), "FFT shape mismatch");
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); fx.get_inplace_scratch_len().max(fy.get_inplace_scratch_len())];
        for mut row in data.rows_mut() {
            match row.as_slice_mut() {
                Some(s) => fy.process_with_scratch(s, &mut scratch),
                None => {
                    let mut buf: Vec<Complex64> = row.to_vec();
                    fy.process_with_scratch(&mut buf, &mut scratch);
                    row.iter_mut().zip(buf).for_each(|(d, v)| *d = v);
                }
            }
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nx];
        for mut col in data.columns_mut() {
            buf.iter_mut().zip(col.iter()).for_each(|(b, v)| *b = *v);
            fx.process_with_scratch(&mut buf, &mut scratch);
            col.iter_mut().zip(buf.iter()).for_each(|(d, v)| *d = *v);
        }
    }
}

/// Spatial frequency of FFT bin `k` for `n` samples spaced `d` apart.
pub fn fft_frequency(k: usize, n: usize, d: f64) -> f64 {
    let k = if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    };
    k / (n as f64 * d)
}

/// Type-I discrete sine transform of length `n`, computed two real vectors at a time
/// through one complex FFT of length `2(n+1)`.
struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst1 {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        Self {
            n,
            fft: planner.plan_fft_forward(2 * (n + 1)),
        }
    }

    /// Transform `a` and `b` in place: `S_k = sum_m x_m sin(pi (m+1)(k+1) / (n+1))`.
    fn pair(&self, a: &mut [f64], b: &mut [f64], buf: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = self.n;
        buf[0] = Complex64::new(0.0, 0.0);
        buf[n + 1] = Complex64::new(0.0, 0.0);
        for m in 0..n {
            let z = Complex64::new(a[m], b[m]);
            buf[m + 1] = z;
            buf[2 * n + 1 - m] = -z;
        }
        self.fft.process_with_scratch(buf, scratch);
        for k in 0..n {
            let z = buf[k + 1];
            a[k] = -0.5 * z.im;
            b[k] = 0.5 * z.re;
        }
    }
}

/// 2D type-I sine transform on row-major data of shape `(nx, ny)` (y contiguous).
pub struct Dst2 {
    nx: usize,
    ny: usize,
    dx: Dst1,
    dy: Dst1,
}

impl Dst2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            dx: Dst1::new(nx, &mut planner),
            dy: Dst1::new(ny, &mut planner),
        }
    }

    /// Unnormalised forward transform. Applying it twice multiplies by `(nx+1)(ny+1)/4`.
    pub fn forward(&self, data: &mut [f64]) {
        self.forward_y(data);
        self.forward_x(data);
    }

    /// Transform along y only. Applying it twice multiplies by `(ny+1)/2`.
    pub fn forward_y(&self, data: &mut [f64]) {
        let ny = self.ny;
        assert_eq!(data.len(), self.nx * ny);
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * (ny + 1)];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.dy.fft.get_inplace_scratch_len()];
        let mut rows = data.chunks_exact_mut(ny);
        let mut spare = vec![0.0; ny];
        loop {
            match (rows.next(), rows.next()) {
                (Some(a), Some(b)) => self.dy.pair(a, b, &mut buf, &mut scratch),
                (Some(a), None) => {
                    self.dy.pair(a, &mut spare, &mut buf, &mut scratch);
                    break;
                }
                _ => break,
            }
        }
    }

    /// Transform along x only. Applying it twice multiplies by `(nx+1)/2`.
    pub fn forward_x(&self, data: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        assert_eq!(data.len(), nx * ny);
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * (nx + 1)];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.dx.fft.get_inplace_scratch_len()];
        let mut spare = vec![0.0; nx];
        // Columns are strided; gather them a panel at a time to stay cache friendly.
        const PANEL: usize = 16;
        let mut panel = vec![0.0; PANEL * nx];
        let mut j0 = 0;
        while j0 < ny {
            let w = PANEL.min(ny - j0);
            for i in 0..nx {
                for c in 0..w {
                    panel[c * nx + i] = data[i * ny + j0 + c];
                }
            }
            let mut cols = panel[..w * nx].chunks_exact_mut(nx);
            loop {
                match (cols.next(), cols.next()) {
                    (Some(a), Some(b)) => self.dx.pair(a, b, &mut buf, &mut scratch),
                    (Some(a), None) => {
                        self.dx.pair(a, &mut spare, &mut buf, &mut scratch);
                        break;
                    }
                    _ => break,
                }
            }
            for i in 0..nx {
                for c in 0..w {
                    data[i * ny + j0 + c] = panel[c * nx + i];
                }
            }
            j0 += w;
        }
    }

    /// Inverse of [`forward`](Self::forward).
    pub fn inverse(&self, data: &mut [f64]) {
        self.forward(data);
        let s = 4.0 / ((self.nx + 1) * (self.ny + 1)) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_dst2(data: &[f64], nx: usize, ny: usize) -> Vec<f64> {
        let mut out = vec![0.0; nx * ny];
        for k in 0..nx {
            for l in 0..ny {
                let mut acc = 0.0;
                for i in 0..nx {
                    for j in 0..ny {
                        acc += data[i * ny + j]
                            * (PI * ((i + 1) * (k + 1)) as f64 / (nx + 1) as f64).sin()
                            * (PI * ((j + 1) * (l + 1)) as f64 / (ny + 1) as f64).sin();
                    }
                }
                out[k * ny + l] = acc;
            }
        }
        out
    }

    #[test]
    fn dst_matches_direct_sum_for_odd_and_even_sizes() {
        for &(nx, ny) in &[(5, 7), (4, 6), (1, 3), (8, 1)] {
            let data: Vec<f64> = (0..nx * ny).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.3).collect();
            let mut fast = data.clone();
            Dst2::new(nx, ny).forward(&mut fast);
            let slow = naive_dst2(&data, nx, ny);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10, "{nx}x{ny}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn dst_inverse_round_trips() {
        let (nx, ny) = (9, 12);
        let data: Vec<f64> = (0..nx * ny).map(|k| (k as f64 * 0.7).sin()).collect();
        let mut v = data.clone();
        let t = Dst2::new(nx, ny);
        t.forward(&mut v);
        t.inverse(&mut v);
        for (a, b) in v.iter().zip(&data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fft2_round_trips_and_locates_tone() {
        let (nx, ny) = (12, 10);
        let mut a = Array2::from_shape_fn((nx, ny), |(i, j)| {
            Complex64::from_polar(
                1.0,
                2.0 * PI * (3.0 * i as f64 / nx as f64 + 2.0 * j as f64 / ny as f64),
            )
        });
        let orig = a.clone();
        let f = Fft2::new(nx, ny);
        f.forward(&mut a);
        assert!((a[[3, 2]].norm() - (nx * ny) as f64).abs() < 1e-9);
        f.inverse(&mut a);
        for (x, y) in a.iter().zip(orig.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn frequencies_wrap() {
        assert_eq!(fft_frequency(0, 8, 1.0), 0.0);
        assert_eq!(fft_frequency(3, 8, 1.0), 3.0 / 8.0);
        assert_eq!(fft_frequency(4, 8, 1.0), -4.0 / 8.0);
        assert_eq!(fft_frequency(7, 8, 0.5), -1.0 / 4.0);
        assert_eq!(fft_frequency(2, 5, 1.0), 2.0 / 5.0);
        assert_eq!(fft_frequency(3, 5, 1.0), -2.0 / 5.0);
    }
}
