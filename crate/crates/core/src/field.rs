//! Complex scalar fields sampled on a uniform 2D grid.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A monochromatic transverse field sampled at `origin + (i*dx, j*dy)`.
///
/// Samples are indexed `[ix, iy]`. Power is `sum |E|^2 dx dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    samples: Array2<Complex64>,
    dx: f64,
    dy: f64,
    origin: (f64, f64),
    wavelength: f64,
}

impl ScalarField2D {
    pub fn new(samples: Array2<Complex64>, dx: f64, dy: f64, origin: (f64, f64), wavelength: f64) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacings must be positive, got dx={dx}, dy={dy}"
            )));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::InvalidGrid("field has no samples".into()));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::InvalidGrid("origin is not finite".into()));
        }
        Ok(Self {
            samples,
            dx,
            dy,
            origin,
            wavelength,
        })
    }

    pub fn zeros(nx: usize, ny: usize, dx: f64, dy: f64, origin: (f64, f64), wavelength: f64) -> Result<Self> {
        Self::new(Array2::zeros((nx, ny)), dx, dy, origin, wavelength)
    }

    /// Sample a function of position `(x, y)` onto the grid.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        origin: (f64, f64),
        wavelength: f64,
        f: impl Fn(f64, f64) -> Complex64,
    ) -> Result<Self> {
        let samples = Array2::from_shape_fn((nx, ny), |(i, j)| f(origin.0 + i as f64 * dx, origin.1 + j as f64 * dy));
        Self::new(samples, dx, dy, origin, wavelength)
    }

    /// A grid of `nx * ny` samples whose centre sits at `(0, 0)`.
    pub fn centered_origin(nx: usize, ny: usize, dx: f64, dy: f64) -> (f64, f64) {
        (-(nx as f64 - 1.0) * dx / 2.0, -(ny as f64 - 1.0) * dy / 2.0)
    }

    pub fn samples(&self) -> &Array2<Complex64> {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.samples
    }

    pub fn into_samples(self) -> Array2<Complex64> {
        self.samples
    }

    pub fn nx(&self) -> usize {
        self.samples.nrows()
    }

    pub fn ny(&self) -> usize {
        self.samples.ncols()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn x(&self, i: usize) -> f64 {
        self.origin.0 + i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.origin.1 + j as f64 * self.dy
    }

    /// Inclusive coordinate bounds `(x_min, x_max, y_min, y_max)` of the sample lattice.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.x(0), self.x(self.nx() - 1), self.y(0), self.y(self.ny() - 1))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, x1, y0, y1) = self.bounds();
        let ex = 1e-9 * self.dx;
        let ey = 1e-9 * self.dy;
        x >= x0 - ex && x <= x1 + ex && y >= y0 - ey && y <= y1 + ey
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.samples.mapv(|c| c.norm_sqr())
    }

    pub fn power(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.dx * self.dy
    }

    pub fn scale(&mut self, factor: f64) {
        self.samples.mapv_inplace(|c| c * factor);
    }

    /// Index of the sample with the largest intensity.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_val = f64::NEG_INFINITY;
        for ((i, j), c) in self.samples.indexed_iter() {
            let v = c.norm_sqr();
            if v > best_val {
                best_val = v;
                best = (i, j);
            }
        }
        best
    }

    /// Fractional sample coordinates of a physical position.
    pub fn to_index(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin.0) / self.dx, (y - self.origin.1) / self.dy)
    }

    /// Bilinear interpolation of the complex field. Outside the lattice the field is zero.
    pub fn interpolate(&self, x: f64, y: f64) -> Complex64 {
        let (fx, fy) = self.to_index(x, y);
        let nx = self.nx() as isize;
        let ny = self.ny() as isize;
        let i0 = fx.floor() as isize;
        let j0 = fy.floor() as isize;
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let get = |i: isize, j: isize| -> Complex64 {
            if i < 0 || j < 0 || i >= nx || j >= ny {
                Complex64::new(0.0, 0.0)
            } else {
                self.samples[[i as usize, j as usize]]
            }
        };
        get(i0, j0) * ((1.0 - tx) * (1.0 - ty))
            + get(i0 + 1, j0) * (tx * (1.0 - ty))
            + get(i0, j0 + 1) * ((1.0 - tx) * ty)
            + get(i0 + 1, j0 + 1) * (tx * ty)
    }

    /// Sum of `|E|^2 dx dy` over samples whose centres lie within `radius` of `(cx, cy)`.
    pub fn disc_power(&self, cx: f64, cy: f64, radius: f64) -> f64 {
        let r2 = radius * radius;
        let (fi, fj) = self.to_index(cx, cy);
        let ri = (radius / self.dx).ceil() as isize + 1;
        let rj = (radius / self.dy).ceil() as isize + 1;
        let ci = fi.round() as isize;
        let cj = fj.round() as isize;
        let mut acc = 0.0;
        for i in (ci - ri).max(0)..=(ci + ri).min(self.nx() as isize - 1) {
            let x = self.x(i as usize) - cx;
            for j in (cj - rj).max(0)..=(cj + rj).min(self.ny() as isize - 1) {
                let y = self.y(j as usize) - cy;
                if x * x + y * y <= r2 * (1.0 + 1e-12) {
                    acc += self.samples[[i as usize, j as usize]].norm_sqr();
                }
            }
        }
        acc * self.dx * self.dy
    }

    /// Write as CSV with header `x,y,re,im`, one row per sample, x-major order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        wr.write_record(["x", "y", "re", "im"]).map_err(csv_err)?;
        for ((i, j), c) in self.samples.indexed_iter() {
            wr.write_record(&[
                format!("{:e}", self.x(i)),
                format!("{:e}", self.y(j)),
                format!("{:e}", c.re),
                format!("{:e}", c.im),
            ])
            .map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Read a field written by [`write_csv`](Self::write_csv). The lattice is recovered
    /// from the distinct coordinate values.
    pub fn read_csv<R: Read>(r: R, wavelength: f64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rows: Vec<[f64; 4]> = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() < 4 {
                return Err(Error::Parse("field CSV rows need x,y,re,im".into()));
            }
            let mut v = [0.0; 4];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = rec[k]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number `{}`", &rec[k])))?;
            }
            rows.push(v);
        }
        if rows.is_empty() {
            return Err(Error::Parse("field CSV is empty".into()));
        }
        let distinct = |k: usize| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1e-30));
            v
        };
        let xs = distinct(0);
        let ys = distinct(1);
        let (nx, ny) = (xs.len(), ys.len());
        if nx * ny != rows.len() {
            return Err(Error::Parse(format!(
                "field CSV is not a full lattice: {} rows for {nx} x {ny} coordinates",
                rows.len()
            )));
        }
        let dx = if nx > 1 {
            (xs[nx - 1] - xs[0]) / (nx - 1) as f64
        } else {
            1.0
        };
        let dy = if ny > 1 {
            (ys[ny - 1] - ys[0]) / (ny - 1) as f64
        } else {
            1.0
        };
        let mut samples = Array2::zeros((nx, ny));
        for r in &rows {
            let i = ((r[0] - xs[0]) / dx).round() as usize;
            let j = ((r[1] - ys[0]) / dy).round() as usize;
            samples[[i.min(nx - 1), j.min(ny - 1)]] = Complex64::new(r[2], r[3]);
        }
        Self::new(samples, dx, dy, (xs[0], ys[0]), wavelength)
    }

    pub fn read_csv_file(path: &Path, wavelength: f64) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), wavelength)
    }
}
