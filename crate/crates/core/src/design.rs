//! The chip-plane / qubit-plane design space.
//!
//! Seven parameters (spot, spacing and NA on each side, plus magnification) are tied by
//! four monomial relations:
//!
//! - `s_q = M * s_c`
//! - `w_q = M * w_c`
//! - `na_chip = lambda / (c * w_c)`
//! - `na_qubit = lambda / (c * w_q)`
//!
//! with `c = pi` by default. Taking logarithms makes every relation linear, so whether a
//! choice of three known parameters pins down the rest is an exact integer rank question.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion_chain::IonChain;

/// Relative tolerance for consistency of supplied values and of solved output.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "w_c")]
    SpotChip,
    #[serde(rename = "s_c")]
    SpacingChip,
    #[serde(rename = "na_chip")]
    NaChip,
    #[serde(rename = "w_q")]
    SpotQubit,
    #[serde(rename = "s_q")]
    SpacingQubit,
    #[serde(rename = "na_qubit")]
    NaQubit,
    #[serde(rename = "M")]
    Magnification,
}

impl Param {
    pub const ALL: [Param; 7] = [
        Param::SpotChip,
        Param::SpacingChip,
        Param::NaChip,
        Param::SpotQubit,
        Param::SpacingQubit,
        Param::NaQubit,
        Param::Magnification,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Param::SpotChip => "w_c",
            Param::SpacingChip => "s_c",
            Param::NaChip => "na_chip",
            Param::SpotQubit => "w_q",
            Param::SpacingQubit => "s_q",
            Param::NaQubit => "na_qubit",
            Param::Magnification => "M",
        }
    }

    pub fn is_length(self) -> bool {
        matches!(
            self,
            Param::SpotChip | Param::SpacingChip | Param::SpotQubit | Param::SpacingQubit
        )
    }

    /// The same quantity on the other side of the imaging system (M maps to itself).
    pub fn mirrored(self) -> Param {
        match self {
            Param::SpotChip => Param::SpotQubit,
            Param::SpacingChip => Param::SpacingQubit,
            Param::NaChip => Param::NaQubit,
            Param::SpotQubit => Param::SpotChip,
            Param::SpacingQubit => Param::SpacingChip,
            Param::NaQubit => Param::NaChip,
            Param::Magnification => Param::Magnification,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "w_c" | "spot_chip" => Param::SpotChip,
            "s_c" | "spacing_chip" => Param::SpacingChip,
            "na_c" | "na_chip" => Param::NaChip,
            "w_q" | "spot_qubit" => Param::SpotQubit,
            "s_q" | "spacing_qubit" => Param::SpacingQubit,
            "na_q" | "na_qubit" => Param::NaQubit,
            "M" | "m" | "magnification" => Param::Magnification,
            other => return Err(Error::Parse(format!("unknown design parameter '{other}'"))),
        })
    }
}

/// A complete, consistent design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParameters {
    pub w_c: f64,
    pub s_c: f64,
    pub na_chip: f64,
    pub w_q: f64,
    pub s_q: f64,
    pub na_qubit: f64,
    #[serde(rename = "M")]
    pub magnification: f64,
    pub wavelength: f64,
}

impl DesignParameters {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::SpotChip => self.w_c,
            Param::SpacingChip => self.s_c,
            Param::NaChip => self.na_chip,
            Param::SpotQubit => self.w_q,
            Param::SpacingQubit => self.s_q,
            Param::NaQubit => self.na_qubit,
            Param::Magnification => self.magnification,
        }
    }

    fn from_values(v: [f64; 7], wavelength: f64) -> Self {
        Self {
            w_c: v[0],
            s_c: v[1],
            na_chip: v[2],
            w_q: v[3],
            s_q: v[4],
            na_qubit: v[5],
            magnification: v[6],
            wavelength,
        }
    }

    /// Largest relative violation of the four relations under `convention`.
    pub fn max_violation(&self, convention: &DesignConvention) -> f64 {
        let c = convention.na_constant;
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        [
            rel(self.s_q, self.magnification * self.s_c),
            rel(self.w_q, self.magnification * self.w_c),
            rel(self.na_chip, self.wavelength / (c * self.w_c)),
            rel(self.na_qubit, self.wavelength / (c * self.w_q)),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Human-readable table, one parameter per line.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for p in Param::ALL {
            let v = self.get(p);
            let line = if p.is_length() {
                format!("{:<9} {:>14.6} um\n", p.symbol(), v * 1e6)
            } else {
                format!("{:<9} {:>14.6}\n", p.symbol(), v)
            };
            out.push_str(&line);
        }
        out.push_str(&format!("{:<9} {:>14.6} nm\n", "lambda", self.wavelength * 1e9));
        out
    }
}

/// The constant in `NA = lambda / (c * w)`, `w` being the 1/e^2 intensity radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConvention {
    pub na_constant: f64,
}

impl Default for DesignConvention {
    fn default() -> Self {
        Self {
            na_constant: std::f64::consts::PI,
        }
    }
}

/// Rows of the log-space constraint matrix; columns follow [`Param::ALL`].
/// Each row `r` reads `sum_k r[k] ln(x_k) = rhs`, with `rhs` zero for the
/// magnification relations and `ln(lambda / c)` for the NA relations.
const CONSTRAINTS: [[i64; 7]; 4] = [
    // ln s_q - ln M - ln s_c = 0
    [0, -1, 0, 0, 1, 0, -1],
    // ln w_q - ln M - ln w_c = 0
    [-1, 0, 0, 1, 0, 0, -1],
    // ln na_chip + ln w_c = ln(lambda / c)
    [1, 0, 1, 0, 0, 0, 0],
    // ln na_qubit + ln w_q = ln(lambda / c)
    [0, 0, 0, 1, 0, 1, 0],
];

const NA_ROWS: [bool; 4] = [false, false, true, true];

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Integer row reduction of `rows`, each carrying an identity tag so that combinations
/// which vanish are returned as left null vectors. Returns `(rank, null_combinations)`.
fn integer_rank(rows: &[Vec<i64>]) -> (usize, Vec<Vec<i64>>) {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let mut work: Vec<Vec<i64>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut w = r.clone();
            w.extend((0..m).map(|j| i64::from(i == j)));
            w
        })
        .collect();
    let mut rank = 0;
    for col in 0..n {
        let Some(p) = (rank..m).find(|&r| work[r][col] != 0) else {
            continue;
        };
        work.swap(rank, p);
        for r in 0..m {
            if r == rank || work[r][col] == 0 {
                continue;
            }
            let (a, b) = (work[rank][col], work[r][col]);
            let pivot = work[rank].clone();
            let row = &mut work[r];
            for (x, y) in row.iter_mut().zip(&pivot) {
                *x = a * *x - b * y;
            }
            let g = row.iter().fold(0, |g, &x| gcd(g, x));
            if g > 1 {
                row.iter_mut().for_each(|x| *x /= g);
            }
        }
        rank += 1;
    }
    let null = work[rank..].iter().map(|w| w[n..].to_vec()).collect();
    (rank, null)
}

fn system_rows(known: &[Param]) -> Vec<Vec<i64>> {
    let mut rows: Vec<Vec<i64>> = CONSTRAINTS.iter().map(|r| r.to_vec()).collect();
    for p in known {
        let mut r = vec![0; 7];
        r[p.index()] = 1;
        rows.push(r);
    }
    rows
}

/// Whether fixing `known` (with lambda) determines all seven parameters.
pub fn is_determined(known: &[Param]) -> bool {
    integer_rank(&system_rows(known)).0 == 7
}

/// Every three-element subset of the parameters with its solvability.
pub fn enumerate_known_sets() -> Vec<([Param; 3], bool)> {
    let mut out = Vec::with_capacity(35);
    for a in 0..7 {
        for b in (a + 1)..7 {
            for c in (b + 1)..7 {
                let set = [Param::ALL[a], Param::ALL[b], Param::ALL[c]];
                out.push((set, is_determined(&set)));
            }
        }
    }
    out
}

/// Complete a design from exactly three known parameters.
pub fn solve_design(known: &[(Param, f64)], wavelength: f64) -> Result<DesignParameters> {
    solve_design_with(known, wavelength, &DesignConvention::default())
}

pub fn solve_design_with(
    known: &[(Param, f64)],
    wavelength: f64,
    convention: &DesignConvention,
) -> Result<DesignParameters> {
    if known.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "exactly 3 known parameters are required, got {}",
            known.len()
        )));
    }
    for (i, (p, _)) in known.iter().enumerate() {
        if known[..i].iter().any(|(q, _)| q == p) {
            return Err(Error::InvalidInput(format!("parameter {p} given twice")));
        }
    }
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    if !(convention.na_constant > 0.0 && convention.na_constant.is_finite()) {
        return Err(Error::InvalidInput("NA convention constant must be positive".into()));
    }
    for (p, v) in known {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::OutOfRange(format!("{p} must be positive and finite, got {v}")));
        }
        if matches!(p, Param::NaChip | Param::NaQubit) && *v > 1.0 {
            return Err(Error::OutOfRange(format!("{p} = {v} exceeds 1")));
        }
    }

    let params: Vec<Param> = known.iter().map(|(p, _)| *p).collect();
    let rows = system_rows(&params);
    let ln_na = (wavelength / convention.na_constant).ln();
    let rhs: Vec<f64> = NA_ROWS
        .iter()
        .map(|&na| if na { ln_na } else { 0.0 })
        .chain(known.iter().map(|(_, v)| v.ln()))
        .collect();

    let (rank, null) = integer_rank(&rows);
    if rank < 7 {
        // A vanishing combination of the rows must also annihilate the right-hand side;
        // otherwise the supplied values contradict one of the relations.
        for y in &null {
            let lhs: f64 = y.iter().zip(&rhs).map(|(&c, r)| c as f64 * r).sum();
            let scale: f64 = y
                .iter()
                .zip(&rhs)
                .map(|(&c, r)| (c as f64 * r).abs())
                .sum::<f64>()
                .max(1.0);
            if lhs.abs() > CONSISTENCY_TOLERANCE * scale {
                return Err(Error::Inconsistent(format!(
                    "known set {{{}}} violates a design relation",
                    names(&params)
                )));
            }
        }
        return Err(Error::Underdetermined(format!(
            "known set {{{}}} leaves {} degree(s) of freedom",
            names(&params),
            7 - rank
        )));
    }

    let a = nalgebra::DMatrix::from_fn(7, 7, |i, j| rows[i][j] as f64);
    let b = nalgebra::DVector::from_column_slice(&rhs);
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Underdetermined("design system is singular".into()))?;
    let mut values = [0.0; 7];
    for (k, v) in values.iter_mut().enumerate() {
        *v = x[k].exp();
    }
    // Return the supplied values verbatim rather than their log round trip.
    for (p, v) in known {
        values[p.index()] = *v;
    }
    let out = DesignParameters::from_values(values, wavelength);
    for p in Param::ALL {
        let v = out.get(p);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "solved {p} = {v} is not a positive finite value"
            )));
        }
        if matches!(p, Param::NaChip | Param::NaQubit) && v > 1.0 {
            return Err(Error::OutOfRange(format!("solved {p} = {v} exceeds 1")));
        }
    }
    Ok(out)
}

fn names(params: &[Param]) -> String {
    params.iter().map(|p| p.symbol()).collect::<Vec<_>>().join(", ")
}

/// Output pitch relative to the closest ion spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchCheck {
    pub ratio: f64,
    pub in_band: bool,
    pub band: (f64, f64),
}

pub const DEFAULT_PITCH_BAND: (f64, f64) = (5.0, 10.0);

/// `s_c / min_gap`, in band when it lies within `band` (inclusive).
pub fn pitch_ratio(spacing_chip: f64, min_gap: f64, band: (f64, f64)) -> PitchCheck {
    let ratio = spacing_chip / min_gap;
    PitchCheck {
        ratio,
        in_band: ratio >= band.0 && ratio <= band.1,
        band,
    }
}

/// Pitch check against a solved chain. Chains with fewer than two ions have no gap.
pub fn check_pitch_ratio(params: &DesignParameters, chain: &IonChain, band: (f64, f64)) -> Result<PitchCheck> {
    let gap = chain
        .min_gap()
        .ok_or_else(|| Error::InvalidInput("pitch check needs at least two ions".into()))?;
    Ok(pitch_ratio(params.s_c, gap, band))
}
