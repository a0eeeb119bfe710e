//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the library's numerics; each oracle is derived from
//! first principles so that agreement means something.

#![allow(dead_code)]

use std::f64::consts::PI;

use chipbeam::ScalarField2D;
use num_complex::Complex64;

/// Plain bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fundamental TE index of a symmetric slab of thickness `d`, from
/// `kappa tan(kappa d / 2) = gamma`.
pub fn slab_te_fundamental(n_core: f64, n_clad: f64, d: f64, wavelength: f64) -> f64 {
    let k0 = 2.0 * PI / wavelength;
    // Parametrise by the transverse phase so the branch of tan is fixed.
    let v = 0.5 * k0 * d * (n_core * n_core - n_clad * n_clad).sqrt();
    let phase = bisect(1e-12, (PI / 2.0 - 1e-12).min(v), |u| {
        let w = (v * v - u * u).max(0.0).sqrt();
        u * u.tan() - w
    });
    let kappa = 2.0 * phase / d;
    (n_core * n_core - (kappa / k0).powi(2)).sqrt()
}

/// Number of guided TE modes of a symmetric slab of thickness `d`.
pub fn slab_mode_count(n_core: f64, n_clad: f64, d: f64, wavelength: f64) -> usize {
    let v = PI * d / wavelength * (n_core * n_core - n_clad * n_clad).sqrt();
    (v / (PI / 2.0)).floor() as usize + 1
}

/// Even and odd TE supermodes of two identical slabs of thickness `d` whose facing
/// edges are `gap` apart, by the transfer-matrix dispersion relation.
pub fn twin_slab_te(n_core: f64, n_clad: f64, d: f64, gap: f64, wavelength: f64) -> (f64, f64) {
    let k0 = 2.0 * PI / wavelength;
    // Field ~ cosh / sinh in the gap, cos(kx + phi) in the core, decaying outside.
    let solve = |even: bool| {
        let f = |n: f64| {
            let kappa = k0 * (n_core * n_core - n * n).sqrt();
            let gamma = k0 * (n * n - n_clad * n_clad).sqrt();
            let g = gap / 2.0;
            // Log-derivative of the gap field at the inner core edge.
            let inner = if even {
                gamma * (gamma * g).tanh()
            } else {
                gamma / (gamma * g).tanh()
            };
            // Core field A cos(kappa s) + B sin(kappa s), s from the inner edge; the outer
            // edge must match a decaying exponential: E'/E = -gamma.
            let (a, b) = (1.0, inner / kappa);
            let s = kappa * d;
            let e = a * s.cos() + b * s.sin();
            let de = kappa * (-a * s.sin() + b * s.cos());
            de + gamma * e
        };
        // Scan downward from the core index for the first root.
        let n_top = n_core - 1e-9;
        let steps = 20000;
        let mut prev = (n_top, f(n_top));
        for k in 1..=steps {
            let n = n_top - (n_top - n_clad - 1e-9) * k as f64 / steps as f64;
            let v = f(n);
            if v * prev.1 <= 0.0 {
                return bisect(n, prev.0, f);
            }
            prev = (n, v);
        }
        panic!("no supermode found")
    };
    (solve(true), solve(false))
}

/// Equilibrium of a Coulomb chain in a unit harmonic well by exact coordinate-wise
/// minimisation: each ion in turn is moved to the zero of its own force, with the
/// others held fixed. The force is monotone between neighbours, so bisection is safe.
pub fn brute_force_chain(n: usize) -> Vec<f64> {
    let mut u: Vec<f64> = (0..n).map(|i| 1.5 * (i as f64 - (n as f64 - 1.0) / 2.0)).collect();
    let force = |u: &[f64], i: usize, x: f64| {
        let mut f = -x;
        for (j, &uj) in u.iter().enumerate() {
            if j != i {
                let d = x - uj;
                f += d.signum() / (d * d);
            }
        }
        f
    };
    for _sweep in 0..200_000 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let lo = if i > 0 { u[i - 1] + 1e-9 } else { u[i] - 50.0 };
            let hi = if i + 1 < n { u[i + 1] - 1e-9 } else { u[i] + 50.0 };
            let x = bisect(lo, hi, |x| force(&u, i, x));
            moved = moved.max((x - u[i]).abs());
            u[i] = x;
        }
        if moved < 1e-14 {
            break;
        }
    }
    u
}

/// Largest net force on any ion of a dimensionless chain.
pub fn chain_residual(u: &[f64]) -> f64 {
    (0..u.len())
        .map(|i| {
            let mut f = -u[i];
            for (j, &uj) in u.iter().enumerate() {
                if j != i {
                    let d = u[i] - uj;
                    f += d.signum() / (d * d);
                }
            }
            f.abs()
        })
        .fold(0.0, f64::max)
}

/// Parameters in the order w_c, s_c, na_c, w_q, s_q, na_q, M.
pub const DESIGN_NAMES: [&str; 7] = ["w_c", "s_c", "na_c", "w_q", "s_q", "na_q", "M"];

/// Log-space rows of the imaging relations: `w_q = M w_c`, `s_q = M s_c`,
/// `na_q = na_c / M`, `na_c w_c = const`, `na_q w_q = const`.
pub fn design_relations() -> Vec<[f64; 7]> {
    vec![
        [-1.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0],
        [0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0],
        [0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 1.0],
        [1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0],
    ]
}

/// Rank of a small matrix by Gaussian elimination with partial pivoting.
pub fn rank(mut rows: Vec<Vec<f64>>) -> usize {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).max_by(|&a, &b| rows[a][c].abs().total_cmp(&rows[b][c].abs())) else {
            break;
        };
        if rows[p][c].abs() < 1e-9 {
            continue;
        }
        rows.swap(r, p);
        let pivot = rows[r].clone();
        for (k, row) in rows.iter_mut().enumerate() {
            if k != r {
                let f = row[c] / pivot[c];
                for (x, y) in row.iter_mut().zip(&pivot) {
                    *x -= f * y;
                }
            }
        }
        r += 1;
    }
    r
}

/// Whether fixing the parameters at `known` indices pins down all seven.
pub fn design_determined(known: &[usize]) -> bool {
    let mut rows: Vec<Vec<f64>> = design_relations().iter().map(|r| r.to_vec()).collect();
    for &k in known {
        let mut e = vec![0.0; 7];
        e[k] = 1.0;
        rows.push(e);
    }
    rank(rows) == 7
}

/// A consistent design generated forwards from `w_c`, `s_c` and `M`, with
/// `NA = lambda / (pi w)`.
pub fn forward_design(w_c: f64, s_c: f64, m: f64, wavelength: f64) -> [f64; 7] {
    let na_c = wavelength / (PI * w_c);
    [w_c, s_c, na_c, m * w_c, m * s_c, na_c / m, m]
}

/// Sampled `exp(-((x-cx)^2 + (y-cy)^2) / w^2)` on a centred square grid.
pub fn gaussian_field(n: usize, step: f64, waist: f64, centre: (f64, f64), wavelength: f64) -> ScalarField2D {
    let o = ScalarField2D::centered_origin(n, n, step, step);
    ScalarField2D::from_fn(n, n, step, step, o, wavelength, |x, y| {
        let r2 = (x - centre.0).powi(2) + (y - centre.1).powi(2);
        Complex64::new((-r2 / (waist * waist)).exp(), 0.0)
    })
    .unwrap()
}

/// `1/e^2` intensity radius along x from the second moment of `|E|^2`.
pub fn second_moment_waist_x(f: &ScalarField2D) -> f64 {
    let (mut p, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for ((i, _), v) in f.samples().indexed_iter() {
        let x = f.x(i);
        let w = v.norm_sqr();
        p += w;
        m1 += w * x;
        m2 += w * x * x;
    }
    let mean = m1 / p;
    2.0 * (m2 / p - mean * mean).sqrt()
}

/// Power of a Gaussian beam of `1/e^2` intensity radius `w` (peak intensity 1) inside a
/// disc of radius `r` whose centre is `d` from the beam axis, by polar quadrature.
pub fn gaussian_disc_power(w: f64, d: f64, r: f64) -> f64 {
    let (nr, nt) = (2000, 2000);
    let mut acc = 0.0;
    for a in 0..nr {
        let rho = (a as f64 + 0.5) * r / nr as f64;
        for b in 0..nt {
            let th = (b as f64 + 0.5) * 2.0 * PI / nt as f64;
            let x = d + rho * th.cos();
            let y = rho * th.sin();
            acc += (-2.0 * (x * x + y * y) / (w * w)).exp() * rho;
        }
    }
    acc * (r / nr as f64) * (2.0 * PI / nt as f64)
}

/// `10 log10` of a power ratio.
pub fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}
