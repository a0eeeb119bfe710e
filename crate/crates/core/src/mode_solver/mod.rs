//! Guided modes of rectangular channel waveguides by semi-vectorial finite differences.

mod coupling;
pub mod eigen;
mod geometry;
pub mod operator;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use coupling::{coupled_pair, coupled_pair_crosstalk, CouplingEstimate};
pub use geometry::{
    permittivity, CoreRect, GridSpec, Parity, Polarization, SimulationGrid, WaveguideGeometry, MIN_CELLS, MIN_MARGIN,
};

use crate::error::{Error, Result};
use crate::field::ScalarField2D;
use eigen::{davidson, DavidsonOptions};
use operator::{LaplacianPreconditioner, ProfilePreconditioner, SemiVectorialOperator, SymmetryProjector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Residual norm at which an eigenpair counts as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Shift added to the Laplacian preconditioner, in units of `n^2`.
    pub preconditioner_shift: f64,
    /// When set, re-solve the fundamental on a grid of half the spacing and fail
    /// with a grid-too-coarse error if `n_eff` moves by more than this.
    pub refinement_tolerance: Option<f64>,
    pub preconditioner: PreconditionerKind,
    pub parity_x: Parity,
    pub parity_y: Parity,
    /// Seed for the small random component of the starting vectors.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 600,
            preconditioner_shift: 0.2,
            refinement_tolerance: None,
            preconditioner: PreconditionerKind::Auto,
            parity_x: Parity::Any,
            parity_y: Parity::Any,
            seed: 0x5eed,
        }
    }
}

/// Preconditioner used inside the eigensolver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerKind {
    /// `Profile` for cores much wider than they are thick, `Laplacian` otherwise.
    #[default]
    Auto,
    /// Shifted Laplacian, inverted in the sine basis.
    Laplacian,
    /// Laplacian across x plus the exact slab operator along y through the core.
    Profile,
}

/// Aspect ratio above which `Auto` picks the profile preconditioner.
const WIDE_CORE_ASPECT: f64 = 10.0;

/// Margin of the profile preconditioner above its lowest eigenvalue, in units of `n^2`.
const PROFILE_DELTA: f64 = 1e-3;

/// One guided eigenmode.
#[derive(Debug, Clone)]
pub struct GuidedMode {
    pub n_eff: f64,
    pub polarization: Polarization,
    /// Dominant transverse electric component, normalised to unit discrete power.
    pub field: ScalarField2D,
    /// Position in the descending-`n_eff` list, starting at 0.
    pub mode_index: usize,
    pub geometry: WaveguideGeometry,
    pub grid: SimulationGrid,
    pub residual: f64,
}

/// 1/e^2 intensity full widths through the field maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFieldDiameter {
    pub mfd_x: f64,
    pub mfd_y: f64,
}

impl GuidedMode {
    pub fn mode_field_diameter(&self) -> ModeFieldDiameter {
        mode_field_diameter(&self.field)
    }

    /// Field samples in solver order (x-major).
    pub fn vector(&self) -> Vec<f64> {
        self.field.samples().iter().map(|c| c.re).collect()
    }

    pub fn summary(&self) -> ModeSummary {
        let mfd = self.mode_field_diameter();
        ModeSummary {
            mode_index: self.mode_index,
            n_eff: self.n_eff,
            polarization: self.polarization,
            mfd_x: mfd.mfd_x,
            mfd_y: mfd.mfd_y,
        }
    }
}

/// Machine-readable summary written next to exported mode fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode_index: usize,
    pub n_eff: f64,
    pub polarization: Polarization,
    #[serde(rename = "MFD_x")]
    pub mfd_x: f64,
    #[serde(rename = "MFD_y")]
    pub mfd_y: f64,
}

/// Full width where the intensity along one line first drops below `1/e^2` of its peak.
fn width_at_e2(line: &[f64], peak: usize, step: f64) -> f64 {
    let level = line[peak] * (-2.0f64).exp();
    let crossing = |dir: isize| -> f64 {
        let mut k = peak as isize;
        loop {
            let next = k + dir;
            if next < 0 || next >= line.len() as isize {
                return (k - peak as isize) as f64;
            }
            let (a, b) = (line[k as usize], line[next as usize]);
            if b < level {
                let t = (a - level) / (a - b);
                return (k - peak as isize) as f64 + dir as f64 * t;
            }
            k = next;
        }
    };
    (crossing(1) - crossing(-1)) * step
}

pub fn mode_field_diameter(field: &ScalarField2D) -> ModeFieldDiameter {
    let inten = field.intensity();
    let (i0, j0) = field.argmax();
    let row: Vec<f64> = inten.column(j0).to_vec();
    let col: Vec<f64> = inten.row(i0).to_vec();
    ModeFieldDiameter {
        mfd_x: width_at_e2(&row, i0, field.dx()),
        mfd_y: width_at_e2(&col, j0, field.dy()),
    }
}

/// Index structure: one or more identical rectangular cores in a uniform cladding.
#[derive(Debug, Clone)]
pub(crate) struct Structure {
    pub cores: Vec<CoreRect>,
    pub n_core: f64,
    pub n_clad: f64,
    pub wavelength: f64,
    /// Full footprint of all cores, used for starting vectors and margin checks.
    pub footprint: (f64, f64),
}

impl Structure {
    pub fn single(geom: &WaveguideGeometry) -> Self {
        Self {
            cores: vec![CoreRect {
                cx: 0.0,
                cy: 0.0,
                width: geom.core_width,
                height: geom.core_thickness,
            }],
            n_core: geom.n_core,
            n_clad: geom.n_clad,
            wavelength: geom.wavelength,
            footprint: (geom.core_width, geom.core_thickness),
        }
    }
}

pub(crate) struct RawMode {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

fn starting_vectors(
    grid: &SimulationGrid,
    structure: &Structure,
    count: usize,
    seed: u64,
    warm: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let (w, h) = structure.footprint;
    let sx = 0.5 * w + 0.3e-6;
    let sy = 0.5 * h + 0.3e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<f64>> = warm.to_vec();
    let mut degree = 0;
    while out.len() < count + warm.len() + 8 && degree < 12 {
        for a in (0..=degree).rev() {
            let b = degree - a;
            let v: Vec<f64> = (0..grid.len())
                .map(|idx| {
                    let x = grid.x(idx / grid.ny) / sx;
                    let y = grid.y(idx % grid.ny) / sy;
                    let g = (-(x * x + y * y)).exp();
                    g * x.powi(a) * y.powi(b) + 1e-3 * (rng.random::<f64>() - 0.5)
                })
                .collect();
            out.push(v);
        }
        degree += 1;
    }
    out
}

/// Solve the eigenproblem for an arbitrary core structure on a given grid.
///
/// Returns the guided eigenpairs (`n_clad^2 < value < n_core^2`), at most `max_modes`,
/// in descending order.
pub(crate) fn solve_structure(
    structure: &Structure,
    grid: &SimulationGrid,
    pol: Polarization,
    max_modes: usize,
    opts: &SolverOptions,
    warm: &[Vec<f64>],
) -> Result<Vec<RawMode>> {
    let eps = permittivity(grid, &structure.cores, structure.n_core, structure.n_clad);
    let k0 = 2.0 * std::f64::consts::PI / structure.wavelength;
    let op = SemiVectorialOperator::new(grid, &eps, k0, pol);
    let proj = SymmetryProjector {
        nx: grid.nx,
        ny: grid.ny,
        x: opts.parity_x,
        y: opts.parity_y,
    };
    // One guard pair beyond the wanted modes keeps the ordering at the cut stable.
    let block = (max_modes + 1).min(grid.len());
    let init = starting_vectors(grid, structure, block, opts.seed, warm);
    let floor = structure.n_clad * structure.n_clad;
    let dopts = DavidsonOptions {
        wanted: max_modes,
        block,
        max_basis: (6 * block).max(24),
        tol: opts.tolerance,
        max_iter: opts.max_iterations,
        floor: Some(floor),
    };
    let proj_ref = if proj.is_trivial() { None } else { Some(&proj) };
    let wide = structure.cores.iter().any(|c| c.width >= WIDE_CORE_ASPECT * c.height);
    let profile = match opts.preconditioner {
        PreconditionerKind::Auto => wide,
        PreconditionerKind::Profile => true,
        PreconditionerKind::Laplacian => false,
    };
    let out = if profile {
        let prec = ProfilePreconditioner::new(grid, &eps, k0, pol, PROFILE_DELTA);
        davidson(&op, &prec, proj_ref, init, &dopts)?
    } else {
        let prec = LaplacianPreconditioner::new(grid, k0, opts.preconditioner_shift);
        davidson(&op, &prec, proj_ref, init, &dopts)?
    };
    let top = structure.n_core * structure.n_core;
    Ok(out
        .pairs
        .into_iter()
        .filter(|p| p.value > floor && p.value < top)
        .map(|p| RawMode {
            value: p.value,
            vector: p.vector,
            residual: p.residual,
        })
        .collect())
}

/// Normalise to unit discrete power and make the largest-magnitude sample positive.
pub(crate) fn to_field(vector: &[f64], grid: &SimulationGrid, wavelength: f64) -> Result<ScalarField2D> {
    let (dx, dy) = (grid.dx(), grid.dy());
    let norm = (vector.iter().map(|v| v * v).sum::<f64>() * dx * dy).sqrt();
    let peak = vector
        .iter()
        .copied()
        .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    let s = peak.signum() / norm;
    let samples = Array2::from_shape_fn((grid.nx, grid.ny), |(i, j)| {
        Complex64::new(vector[i * grid.ny + j] * s, 0.0)
    });
    ScalarField2D::new(samples, dx, dy, (grid.x(0), grid.y(0)), wavelength)
}

/// All guided modes of a single rectangular core, by descending `n_eff`.
pub fn solve_modes(
    geom: &WaveguideGeometry,
    grid: &SimulationGrid,
    pol: Polarization,
    max_modes: usize,
    opts: &SolverOptions,
) -> Result<Vec<GuidedMode>> {
    solve_modes_warm(geom, grid, pol, max_modes, opts, &[])
}

/// As [`solve_modes`], seeding the iteration with vectors from a nearby solve on the same grid.
pub fn solve_modes_warm(
    geom: &WaveguideGeometry,
    grid: &SimulationGrid,
    pol: Polarization,
    max_modes: usize,
    opts: &SolverOptions,
    warm: &[Vec<f64>],
) -> Result<Vec<GuidedMode>> {
    geom.validate()?;
    if max_modes == 0 {
        return Err(Error::InvalidInput("max_modes must be at least 1".into()));
    }
    grid.check_encloses(geom.core_width, geom.core_thickness)?;
    if geom.n_core <= geom.n_clad {
        return Ok(Vec::new());
    }
    let warm: Vec<Vec<f64>> = warm.iter().filter(|w| w.len() == grid.len()).cloned().collect();
    let raw = solve_structure(&Structure::single(geom), grid, pol, max_modes, opts, &warm)?;
    let modes = raw
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(GuidedMode {
                n_eff: r.value.sqrt(),
                polarization: pol,
                field: to_field(&r.vector, grid, geom.wavelength)?,
                mode_index: k,
                geometry: *geom,
                grid: *grid,
                residual: r.residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if let (Some(tol), Some(first)) = (opts.refinement_tolerance, modes.first()) {
        let fine = SolverOptions {
            refinement_tolerance: None,
            ..*opts
        };
        let refined = solve_structure(&Structure::single(geom), &grid.refined(), pol, 1, &fine, &[])?;
        let delta = match refined.first() {
            Some(r) => (r.value.sqrt() - first.n_eff).abs(),
            None => f64::INFINITY,
        };
        if delta > tol {
            return Err(Error::GridTooCoarse { delta, tolerance: tol });
        }
    }
    Ok(modes)
}

/// Fundamental mode only; errors if nothing is guided.
pub fn fundamental_mode(
    geom: &WaveguideGeometry,
    grid: &SimulationGrid,
    pol: Polarization,
    opts: &SolverOptions,
) -> Result<GuidedMode> {
    solve_modes(geom, grid, pol, 1, opts)?
        .into_iter()
        .next()
        .ok_or(Error::ModeNotGuided { width: geom.core_width })
}

/// Which core dimension a cutoff search varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffDimension {
    Width,
    Thickness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutoffOptions {
    pub lo: f64,
    pub hi: f64,
    /// Bisection stops once the bracket is narrower than this.
    pub tolerance: f64,
}

impl Default for CutoffOptions {
    fn default() -> Self {
        Self {
            lo: 50e-9,
            hi: 5e-6,
            tolerance: 5e-9,
        }
    }
}

/// Smallest value of `dimension` at which at least `rank` guided modes exist in the
/// symmetry sector selected by `opts.parity_x/y`. Bisection assumes the mode count
/// grows with the dimension.
pub fn mode_cutoff(
    template: &WaveguideGeometry,
    spec: &GridSpec,
    pol: Polarization,
    dimension: CutoffDimension,
    rank: usize,
    opts: &SolverOptions,
    search: &CutoffOptions,
) -> Result<f64> {
    template.validate()?;
    spec.validate()?;
    if !(search.lo > 0.0 && search.hi > search.lo && search.tolerance > 0.0) {
        return Err(Error::InvalidInput(format!(
            "cutoff search needs 0 < lo < hi and a positive tolerance, got [{}, {}] / {}",
            search.lo, search.hi, search.tolerance
        )));
    }
    let count = |size: f64| -> Result<usize> {
        let mut g = *template;
        match dimension {
            CutoffDimension::Width => g.core_width = size,
            CutoffDimension::Thickness => g.core_thickness = size,
        }
        let grid = spec.grid_around(&g)?;
        Ok(solve_modes(&g, &grid, pol, rank, opts)?.len())
    };
    let not_found = Error::CutoffNotFound {
        lo: search.lo,
        hi: search.hi,
    };
    if count(search.hi)? < rank {
        return Err(not_found);
    }
    if count(search.lo)? >= rank {
        return Err(not_found);
    }
    let (mut lo, mut hi) = (search.lo, search.hi);
    while hi - lo > search.tolerance {
        let mid = 0.5 * (lo + hi);
        if count(mid)? >= rank {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Width at which a second guided mode of `pol` appears.
pub fn single_mode_cutoff_width(
    template: &WaveguideGeometry,
    spec: &GridSpec,
    pol: Polarization,
    opts: &SolverOptions,
    search: &CutoffOptions,
) -> Result<f64> {
    mode_cutoff(template, spec, pol, CutoffDimension::Width, 2, opts, search)
}
