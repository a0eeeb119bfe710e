//! Finite-difference semi-vectorial wave operator and its fast preconditioner.
//!
//! For the dominant transverse component `E` along axis `w` the operator is
//!
//! ```text
//! B E = (1/k0^2) [ d_w( (1/eps) d_w(eps E) ) + d_p^2 E ] + eps E
//! ```
//!
//! where `p` is the other transverse axis. Its eigenvalues are `n_eff^2`. The
//! weighted derivative couples neighbours with `eps_neighbour / eps_face`, which
//! makes the matrix non-symmetric whenever the permittivity varies along `w`.

use super::geometry::{Parity, Polarization, SimulationGrid};
use crate::fft::Dst2;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// The discretised operator on a cell-centred grid with zero field outside.
pub struct SemiVectorialOperator {
    nx: usize,
    ny: usize,
    /// Coefficient of the `+1` neighbour along the weighted axis, per cell.
    up: Vec<f64>,
    /// Coefficient of the `-1` neighbour along the weighted axis, per cell.
    down: Vec<f64>,
    /// Diagonal, including the plain-axis Laplacian and `eps`.
    diag: Vec<f64>,
    /// Coupling to plain-axis neighbours.
    plain: f64,
    weighted_is_x: bool,
}

impl SemiVectorialOperator {
    pub fn new(grid: &SimulationGrid, eps: &[f64], k0: f64, pol: Polarization) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        assert_eq!(eps.len(), nx * ny);
        let k2 = k0 * k0;
        let weighted_is_x = pol == Polarization::TE;
        let (hw, hp) = if weighted_is_x {
            (grid.dx(), grid.dy())
        } else {
            (grid.dy(), grid.dx())
        };
        let cw = 1.0 / (k2 * hw * hw);
        let cp = 1.0 / (k2 * hp * hp);
        let (nw, stride) = if weighted_is_x { (nx, ny) } else { (ny, 1) };
        let pos_w = |idx: usize| if weighted_is_x { idx / ny } else { idx % ny };

        let mut up = vec![0.0; nx * ny];
        let mut down = vec![0.0; nx * ny];
        let mut diag = vec![0.0; nx * ny];
        for idx in 0..nx * ny {
            let e = eps[idx];
            let w = pos_w(idx);
            let mut d = e - 2.0 * cp;
            if w + 1 < nw {
                let en = eps[idx + stride];
                let face = 0.5 * (e + en);
                up[idx] = cw * en / face;
                d -= cw * e / face;
            } else {
                d -= cw;
            }
            if w > 0 {
                let en = eps[idx - stride];
                let face = 0.5 * (e + en);
                down[idx] = cw * en / face;
                d -= cw * e / face;
            } else {
                d -= cw;
            }
            diag[idx] = d;
        }
        Self {
            nx,
            ny,
            up,
            down,
            diag,
            plain: cp,
            weighted_is_x,
        }
    }
}

impl LinearOperator for SemiVectorialOperator {
    fn dim(&self) -> usize {
        self.nx * self.ny
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let cp = self.plain;
        for i in 0..nx {
            let row = i * ny;
            for j in 0..ny {
                let idx = row + j;
                let mut acc = self.diag[idx] * x[idx];
                if self.weighted_is_x {
                    if i + 1 < nx {
                        acc += self.up[idx] * x[idx + ny];
                    }
                    if i > 0 {
                        acc += self.down[idx] * x[idx - ny];
                    }
                    if j + 1 < ny {
                        acc += cp * x[idx + 1];
                    }
                    if j > 0 {
                        acc += cp * x[idx - 1];
                    }
                } else {
                    if j + 1 < ny {
                        acc += self.up[idx] * x[idx + 1];
                    }
                    if j > 0 {
                        acc += self.down[idx] * x[idx - 1];
                    }
                    if i + 1 < nx {
                        acc += cp * x[idx + ny];
                    }
                    if i > 0 {
                        acc += cp * x[idx - ny];
                    }
                }
                y[idx] = acc;
            }
        }
    }
}

/// `(K + shift)^{-1}` with `K = -(1/k0^2) Laplacian` under zero-field walls,
/// applied exactly in the sine basis.
pub struct LaplacianPreconditioner {
    dst: Dst2,
    inv: Vec<f64>,
    scale: f64,
}

impl LaplacianPreconditioner {
    pub fn new(grid: &SimulationGrid, k0: f64, shift: f64) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let k2 = k0 * k0;
        let lx: Vec<f64> = (0..nx)
            .map(|i| {
                let s = (std::f64::consts::PI * (i + 1) as f64 / (2.0 * (nx + 1) as f64)).sin();
                4.0 * s * s / (k2 * grid.dx() * grid.dx())
            })
            .collect();
        let ly: Vec<f64> = (0..ny)
            .map(|j| {
                let s = (std::f64::consts::PI * (j + 1) as f64 / (2.0 * (ny + 1) as f64)).sin();
                4.0 * s * s / (k2 * grid.dy() * grid.dy())
            })
            .collect();
        let mut inv = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                inv[i * ny + j] = 1.0 / (lx[i] + ly[j] + shift);
            }
        }
        Self {
            dst: Dst2::new(nx, ny),
            inv,
            scale: 4.0 / ((nx + 1) * (ny + 1)) as f64,
        }
    }
}

impl Preconditioner for LaplacianPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.dst.forward(z);
        for (v, s) in z.iter_mut().zip(&self.inv) {
            *v *= s * self.scale;
        }
        self.dst.forward(z);
    }
}

/// `(Kx + T + shift)^{-1}` where `Kx` is the Laplacian across x and `T` is the full
/// operator along y through the brightest column, i.e. a slab through the core.
///
/// The slab keeps the vertical confinement exactly, so only the lateral envelope is
/// left to the iteration. This matters for wide cores, whose lateral modes crowd
/// together and stall the plain Laplacian preconditioner. Applied as a sine
/// transform along x and one tridiagonal solve along y per lateral frequency.
pub struct ProfilePreconditioner {
    dst: Dst2,
    nx: usize,
    ny: usize,
    /// Forward-eliminated super-diagonal, per lateral frequency and row.
    cprime: Vec<f64>,
    /// Reciprocal pivots, per lateral frequency and row.
    inv_pivot: Vec<f64>,
    /// Sub-diagonal of `T`.
    sub: Vec<f64>,
    /// Constant added to `Kx + T`.
    shift: f64,
    scale: f64,
}

impl ProfilePreconditioner {
    /// `delta` is the smallest eigenvalue of the shifted separable operator.
    pub fn new(grid: &SimulationGrid, eps: &[f64], k0: f64, pol: Polarization, delta: f64) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let k2 = k0 * k0;
        let i0 = (0..nx)
            .max_by(|&a, &b| {
                let sa: f64 = eps[a * ny..(a + 1) * ny].iter().sum();
                let sb: f64 = eps[b * ny..(b + 1) * ny].iter().sum();
                sa.total_cmp(&sb)
            })
            .unwrap_or(0);
        let col = &eps[i0 * ny..(i0 + 1) * ny];
        let cy = 1.0 / (k2 * grid.dy() * grid.dy());
        // T = -(B restricted to y) on the column: diagonal, super and sub.
        let mut diag = vec![0.0; ny];
        let mut sup = vec![0.0; ny];
        let mut sub = vec![0.0; ny];
        for j in 0..ny {
            let e = col[j];
            if pol == Polarization::TM {
                let mut d = -e;
                if j + 1 < ny {
                    let f = 0.5 * (e + col[j + 1]);
                    sup[j] = -cy * col[j + 1] / f;
                    d += cy * e / f;
                } else {
                    d += cy;
                }
                if j > 0 {
                    let f = 0.5 * (e + col[j - 1]);
                    sub[j] = -cy * col[j - 1] / f;
                    d += cy * e / f;
                } else {
                    d += cy;
                }
                diag[j] = d;
            } else {
                diag[j] = 2.0 * cy - e;
                if j + 1 < ny {
                    sup[j] = -cy;
                }
                if j > 0 {
                    sub[j] = -cy;
                }
            }
        }
        let lx: Vec<f64> = (0..nx)
            .map(|i| {
                let s = (std::f64::consts::PI * (i + 1) as f64 / (2.0 * (nx + 1) as f64)).sin();
                4.0 * s * s / (k2 * grid.dx() * grid.dx())
            })
            .collect();
        let shift = delta - lx[0] - lowest_eigenvalue(&diag, &sup, &sub);
        let mut cprime = vec![0.0; nx * ny];
        let mut inv_pivot = vec![0.0; nx * ny];
        for (i, &l) in lx.iter().enumerate() {
            let row = i * ny;
            let mut prev = 0.0;
            for j in 0..ny {
                let a = diag[j] + l + shift;
                let p = if j == 0 { a } else { a - sub[j] * prev };
                let ip = 1.0 / p;
                inv_pivot[row + j] = ip;
                prev = sup[j] * ip;
                cprime[row + j] = prev;
            }
        }
        Self {
            dst: Dst2::new(nx, ny),
            nx,
            ny,
            cprime,
            inv_pivot,
            sub,
            shift,
            scale: 2.0 / (nx + 1) as f64,
        }
    }
}

impl ProfilePreconditioner {
    /// Constant added to `Kx + T` so that its smallest eigenvalue is `delta`.
    pub fn shift(&self) -> f64 {
        self.shift
    }
}

/// Smallest eigenvalue of a tridiagonal matrix whose off-diagonal products are
/// non-negative, by Sturm-sequence bisection on its symmetrised form.
fn lowest_eigenvalue(diag: &[f64], sup: &[f64], sub: &[f64]) -> f64 {
    let n = diag.len();
    let off2: Vec<f64> = (1..n).map(|j| sup[j - 1] * sub[j]).collect();
    let radius = |j: usize| {
        let l = if j > 0 { off2[j - 1].sqrt() } else { 0.0 };
        let r = if j + 1 < n { off2[j].sqrt() } else { 0.0 };
        l + r
    };
    let mut lo = (0..n).map(|j| diag[j] - radius(j)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..n).map(|j| diag[j] + radius(j)).fold(f64::NEG_INFINITY, f64::max);
    // Count of eigenvalues below x from the signs of the LDL^T pivots.
    let below = |x: f64| {
        let mut count = 0;
        let mut d = 1.0;
        for j in 0..n {
            let o = if j > 0 { off2[j - 1] } else { 0.0 };
            d = diag[j] - x - if j > 0 { o / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (diag[j].abs() + x.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

impl Preconditioner for ProfilePreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let ny = self.ny;
        z.copy_from_slice(r);
        self.dst.forward_x(z);
        for i in 0..self.nx {
            let row = i * ny;
            let line = &mut z[row..row + ny];
            let cp = &self.cprime[row..row + ny];
            let ip = &self.inv_pivot[row..row + ny];
            let mut prev = 0.0;
            for j in 0..ny {
                let v = if j == 0 { line[0] } else { line[j] - self.sub[j] * prev };
                prev = v * ip[j];
                line[j] = prev;
            }
            for j in (0..ny - 1).rev() {
                line[j] -= cp[j] * line[j + 1];
            }
            for v in line.iter_mut() {
                *v *= self.scale;
            }
        }
        self.dst.forward_x(z);
    }
}

/// Projector onto a symmetry sector of the mirror-symmetric grid.
#[derive(Debug, Clone, Copy)]
pub struct SymmetryProjector {
    pub nx: usize,
    pub ny: usize,
    pub x: Parity,
    pub y: Parity,
}

impl SymmetryProjector {
    pub fn is_trivial(&self) -> bool {
        self.x == Parity::Any && self.y == Parity::Any
    }

    pub fn apply(&self, v: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let sign = |p: Parity| if p == Parity::Odd { -1.0 } else { 1.0 };
        if self.x != Parity::Any {
            let s = sign(self.x);
            for i in 0..nx / 2 {
                let m = nx - 1 - i;
                for j in 0..ny {
                    let a = v[i * ny + j];
                    let b = v[m * ny + j];
                    let avg = 0.5 * (a + s * b);
                    v[i * ny + j] = avg;
                    v[m * ny + j] = s * avg;
                }
            }
            if nx % 2 == 1 && s < 0.0 {
                let c = nx / 2;
                v[c * ny..(c + 1) * ny].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        if self.y != Parity::Any {
            let s = sign(self.y);
            for i in 0..nx {
                let row = &mut v[i * ny..(i + 1) * ny];
                for j in 0..ny / 2 {
                    let m = ny - 1 - j;
                    let avg = 0.5 * (row[j] + s * row[m]);
                    row[j] = avg;
                    row[m] = s * avg;
                }
                if ny % 2 == 1 && s < 0.0 {
                    row[ny / 2] = 0.0;
                }
            }
        }
    }
}
