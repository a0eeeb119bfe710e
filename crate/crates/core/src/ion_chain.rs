//! Equilibrium positions of a linear chain of identical ions in a harmonic trap.
//!
//! Positions are found in units of the length scale `l = (q^2 / (4 pi eps0 m w^2))^(1/3)`,
//! where the force balance on ion `i` reads
//! `u_i = sum_{j<i} 1/(u_i - u_j)^2 - sum_{j>i} 1/(u_i - u_j)^2`.

use serde::{Deserialize, Serialize};

use crate::constants::{ba138_ion_mass, PhysicalConstants, ELEMENTARY_CHARGE};
use crate::error::{Error, Result};
use crate::units::{serde_frequency, serde_mass};

/// Largest chain the equilibrium solver accepts.
pub const MAX_IONS: usize = 50;

/// Ion species, trap frequency and chain length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonChainSpec {
    pub n_ions: usize,
    /// Ion mass, kg.
    #[serde(with = "serde_mass")]
    pub mass: f64,
    /// Ion charge, C.
    #[serde(default = "default_charge")]
    pub charge: f64,
    /// Axial secular frequency, Hz (not angular).
    #[serde(with = "serde_frequency")]
    pub axial_frequency: f64,
}

fn default_charge() -> f64 {
    ELEMENTARY_CHARGE
}

impl IonChainSpec {
    /// Eight singly charged barium-138 ions at 34 kHz.
    pub fn ba138_default() -> Self {
        Self {
            n_ions: 8,
            mass: ba138_ion_mass(),
            charge: ELEMENTARY_CHARGE,
            axial_frequency: 34e3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions < 1 {
            return Err(Error::InvalidInput("chain needs at least one ion".into()));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ion mass must be positive, got {}",
                self.mass
            )));
        }
        if !(self.charge > 0.0 && self.charge.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ion charge must be positive, got {}",
                self.charge
            )));
        }
        if self.n_ions > MAX_IONS {
            return Err(Error::InvalidInput(format!(
                "at most {MAX_IONS} ions supported, got {}",
                self.n_ions
            )));
        }
        if !(self.axial_frequency > 0.0 && self.axial_frequency.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "axial frequency must be positive, got {}",
                self.axial_frequency
            )));
        }
        Ok(())
    }
}

/// Natural length scale of the chain, m.
pub fn length_scale(spec: &IonChainSpec) -> Result<f64> {
    length_scale_with(spec, &PhysicalConstants::CODATA_2018)
}

pub fn length_scale_with(spec: &IonChainSpec, c: &PhysicalConstants) -> Result<f64> {
    spec.validate()?;
    // The charge is stored in coulombs; express it through the supplied table so a
    // caller-provided constants set stays self-consistent.
    let q = spec.charge / ELEMENTARY_CHARGE * c.elementary_charge;
    let omega = 2.0 * std::f64::consts::PI * spec.axial_frequency;
    Ok((q * q / (4.0 * std::f64::consts::PI * c.vacuum_permittivity * spec.mass * omega * omega)).cbrt())
}

/// Net dimensionless force on each ion (trap plus Coulomb); zero at equilibrium.
pub fn forces(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut f: Vec<f64> = u.iter().map(|x| -x).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = u[j] - u[i];
            let c = 1.0 / (d * d);
            f[i] -= c;
            f[j] += c;
        }
    }
    f
}

/// Largest absolute force component.
pub fn force_residual(u: &[f64]) -> f64 {
    forces(u).iter().fold(0.0f64, |m, f| m.max(f.abs()))
}

/// Dimensionless potential energy `sum u_i^2 / 2 + sum_{i<j} 1/|u_i - u_j|`.
pub fn potential_energy(u: &[f64]) -> f64 {
    let mut e: f64 = u.iter().map(|x| 0.5 * x * x).sum();
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            e += 1.0 / (u[j] - u[i]).abs();
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Sorted dimensionless positions.
    pub u: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton iteration on the force balance, starting from an evenly spaced guess.
pub fn equilibrium_positions(n: usize) -> Result<Equilibrium> {
    equilibrium_positions_tol(n, 1e-12, 200)
}

pub fn equilibrium_positions_tol(n: usize, tol: f64, max_iter: usize) -> Result<Equilibrium> {
    if n == 0 || n > MAX_IONS {
        return Err(Error::InvalidInput(format!(
            "chain length must be 1..={MAX_IONS}, got {n}"
        )));
    }
    let half = (n as f64 - 1.0) / 2.0;
    let mut u: Vec<f64> = (0..n).map(|i| 0.6 * (i as f64 - half)).collect();
    let mut res = force_residual(&u);
    for iter in 0..max_iter {
        if res <= tol {
            symmetrise(&mut u);
            return Ok(Equilibrium {
                residual: force_residual(&u),
                u,
                iterations: iter,
            });
        }
        let step = newton_step(&u)?;
        // Backtrack until the ordering survives and the residual does not grow.
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(x, s)| x + t * s).collect();
            let ordered = trial.windows(2).all(|w| w[1] > w[0]);
            if ordered {
                let r = force_residual(&trial);
                if r < res || t < 1e-6 {
                    u = trial;
                    res = r;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NoConvergence {
                    what: "ion chain equilibrium",
                    iterations: iter,
                    residual: res,
                });
            }
        }
    }
    if res <= tol {
        symmetrise(&mut u);
        return Ok(Equilibrium {
            residual: force_residual(&u),
            u,
            iterations: max_iter,
        });
    }
    Err(Error::NoConvergence {
        what: "ion chain equilibrium",
        iterations: max_iter,
        residual: res,
    })
}

/// Average the solution with its mirror image to remove round-off asymmetry.
fn symmetrise(u: &mut [f64]) {
    let n = u.len();
    for i in 0..n / 2 {
        let a = 0.5 * (u[n - 1 - i] - u[i]);
        u[i] = -a;
        u[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        u[n / 2] = 0.0;
    }
}

/// Solve `J s = -F` where `J` is the force Jacobian.
fn newton_step(u: &[f64]) -> Result<Vec<f64>> {
    let n = u.len();
    let f = forces(u);
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = -1.0;
        for j in 0..n {
            if i != j {
                let d = (u[i] - u[j]).abs();
                let c = 2.0 / (d * d * d);
                jac[(i, i)] -= c;
                jac[(i, j)] = c;
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(n, f.iter().map(|x| -x));
    jac.lu()
        .solve(&rhs)
        .map(|s| s.iter().copied().collect())
        .ok_or(Error::NoConvergence {
            what: "ion chain Newton step",
            iterations: 0,
            residual: force_residual(u),
        })
}

/// A chain in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonChain {
    pub length_scale: f64,
    /// Positions in m, centred on the trap axis origin.
    pub positions: Vec<f64>,
    pub dimensionless_positions: Vec<f64>,
    pub residual: f64,
}

impl IonChain {
    pub fn min_gap(&self) -> Option<f64> {
        min_gap(&self.positions)
    }

    /// CSV with header `index,u,x_m`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Parse(e.to_string());
        wr.write_record(["index", "u", "x_m"]).map_err(err)?;
        for (i, (u, x)) in self.dimensionless_positions.iter().zip(&self.positions).enumerate() {
            wr.write_record(&[i.to_string(), format!("{u:.15e}"), format!("{x:.15e}")])
                .map_err(err)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Equilibrium chain for a specification.
pub fn physical_positions(spec: &IonChainSpec) -> Result<IonChain> {
    physical_positions_with(spec, &PhysicalConstants::CODATA_2018)
}

pub fn physical_positions_with(spec: &IonChainSpec, c: &PhysicalConstants) -> Result<IonChain> {
    let l = length_scale_with(spec, c)?;
    let eq = equilibrium_positions(spec.n_ions)?;
    Ok(IonChain {
        length_scale: l,
        positions: eq.u.iter().map(|u| u * l).collect(),
        dimensionless_positions: eq.u,
        residual: eq.residual,
    })
}

/// Adjacent spacings of a sorted position list.
pub fn gaps(positions: &[f64]) -> Vec<f64> {
    positions.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Smallest adjacent spacing; `None` for fewer than two ions.
pub fn min_gap(positions: &[f64]) -> Option<f64> {
    gaps(positions).into_iter().reduce(f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_and_three_ions_match_closed_form() {
        let e2 = equilibrium_positions(2).unwrap();
        let a = 0.25f64.cbrt();
        assert!((e2.u[1] - a).abs() < 1e-12 && (e2.u[0] + a).abs() < 1e-12);
        let e3 = equilibrium_positions(3).unwrap();
        let b = 1.25f64.cbrt();
        assert!((e3.u[2] - b).abs() < 1e-12 && e3.u[1].abs() < 1e-15);
    }

    #[test]
    fn chain_length_limits() {
        assert!(equilibrium_positions(0).is_err());
        assert!(equilibrium_positions(MAX_IONS + 1).is_err());
    }

    #[test]
    fn single_ion_sits_at_centre() {
        let e = equilibrium_positions(1).unwrap();
        assert_eq!(e.u, vec![0.0]);
    }

    #[test]
    fn barium_length_scale() {
        let l = length_scale(&IonChainSpec::ba138_default()).unwrap();
        assert!((l / 28.05e-6 - 1.0).abs() < 0.01, "{l}");
    }

    #[test]
    fn long_chains_converge() {
        for n in [20, 35, 50] {
            let e = equilibrium_positions(n).unwrap();
            assert!(e.residual < 1e-10, "{n}: {}", e.residual);
            assert!(e.u.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
