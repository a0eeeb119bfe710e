//! Handlers for the single-level subcommands.

use std::io::Write;
use std::path::PathBuf;

use chipbeam::beam_train::{crosstalk_matrix, default_integration_radius, image_field, ImagingSystemSpec};
use chipbeam::config::OutputFormat;
use chipbeam::constants::ATOMIC_MASS_UNIT;
use chipbeam::design::{pitch_ratio, solve_design_with, DesignConvention, DesignParameters, Param, PitchCheck};
use chipbeam::ion_chain::{gaps, physical_positions_with, IonChainSpec};
use chipbeam::mode_solver::{
    single_mode_cutoff_width, solve_modes, CutoffOptions, GridSpec, ModeSummary, SolverOptions, WaveguideGeometry,
    MIN_MARGIN,
};
use chipbeam::pipeline::{run_scenario, ScenarioConfig};
use chipbeam::taper::{adiabaticity_check, mfd_vs_width, AdiabaticityReport, TaperProfile};
use chipbeam::units::{parse_length, parse_mass, parse_quantity, Dimension};
use chipbeam::{Error, ScalarField2D};
use clap::Args;
use serde::Serialize;

use crate::parse::{assignment, frequency, length, point, positive};
use crate::{Context, Failure, GeometryArgs};

pub type CmdResult = Result<(), Failure>;

pub fn print_json<T: Serialize>(value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::from(Error::Parse(e.to_string())))?;
    text.push('\n');
    write_stdout(text.as_bytes())
}

/// Write to stdout; a closed pipe (e.g. `| head`) is not an error.
pub fn write_stdout(bytes: &[u8]) -> CmdResult {
    match std::io::stdout().lock().write_all(bytes) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::from(Error::io("<stdout>", e))),
        _ => Ok(()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?)
}

impl GeometryArgs {
    pub fn geometry(&self, ctx: &Context) -> Result<WaveguideGeometry, Failure> {
        let mut g = match &self.geometry {
            Some(p) => read_json(p)?,
            None => {
                let mut g = WaveguideGeometry::routing_default();
                g.wavelength = self.wavelength.unwrap_or(g.wavelength);
                if self.n_core.is_none() || self.n_clad.is_none() {
                    let (c, k) = ctx.config.indices_at(g.wavelength)?;
                    g.n_core = c;
                    g.n_clad = k;
                }
                g
            }
        };
        if let Some(v) = self.width {
            g.core_width = v;
        }
        if let Some(v) = self.thickness {
            g.core_thickness = v;
        }
        if let Some(v) = self.wavelength {
            g.wavelength = v;
        }
        if let Some(v) = self.n_core {
            g.n_core = v;
        }
        if let Some(v) = self.n_clad {
            g.n_clad = v;
        }
        g.validate()?;
        Ok(g)
    }

    pub fn grid_spec(&self, default_dx: f64) -> GridSpec {
        let d = self.dx.unwrap_or(default_dx);
        GridSpec {
            dx: d,
            dy: d,
            margin: self.margin.unwrap_or(MIN_MARGIN),
        }
    }
}

fn solver_options(ctx: &Context) -> SolverOptions {
    SolverOptions {
        tolerance: ctx.config.tolerances.mode_residual,
        ..SolverOptions::default()
    }
}

#[derive(Debug, Args)]
pub struct ModesArgs {
    #[command(flatten)]
    pub geom: GeometryArgs,
    #[arg(long, default_value_t = 4)]
    pub max_modes: usize,
    /// Re-solve at half the spacing and fail if the fundamental n_eff moves more than the
    /// configured refinement tolerance.
    #[arg(long)]
    pub self_check: bool,
    /// Directory for `mode_<k>.csv` field files and `mode_summary.json`.
    #[arg(long, value_name = "DIR")]
    pub field_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct ModesOutput {
    geometry: WaveguideGeometry,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    count: usize,
    modes: Vec<ModeSummary>,
}

pub fn modes(ctx: &Context, a: ModesArgs) -> CmdResult {
    let geom = a.geom.geometry(ctx)?;
    let grid = a.geom.grid_spec(GridSpec::default().dx).grid_around(&geom)?;
    let mut opts = solver_options(ctx);
    if a.self_check {
        opts.refinement_tolerance = Some(ctx.config.tolerances.grid_refinement);
    }
    let found = solve_modes(&geom, &grid, a.geom.polarization, a.max_modes, &opts)?;
    let out = ModesOutput {
        geometry: geom,
        nx: grid.nx,
        ny: grid.ny,
        dx: grid.dx(),
        dy: grid.dy(),
        count: found.len(),
        modes: found.iter().map(|m| m.summary()).collect(),
    };
    if let Some(dir) = &a.field_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for m in &found {
            m.field
                .write_csv_file(&dir.join(format!("mode_{}.csv", m.mode_index)))?;
        }
        let p = dir.join("mode_summary.json");
        let text = serde_json::to_string_pretty(&out.modes).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    match ctx.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => print_json(&out),
        OutputFormat::Csv | OutputFormat::Table => {
            let mut s = String::from("mode_index,polarization,n_eff,mfd_x_um,mfd_y_um\n");
            for m in &out.modes {
                s += &format!(
                    "{},{},{:.8},{:.6},{:.6}\n",
                    m.mode_index,
                    m.polarization,
                    m.n_eff,
                    m.mfd_x * 1e6,
                    m.mfd_y * 1e6
                );
            }
            write_stdout(s.as_bytes())
        }
    }
}

#[derive(Debug, Args)]
pub struct CutoffArgs {
    #[command(flatten)]
    pub geom: GeometryArgs,
    /// Lower end of the width search.
    #[arg(long, value_parser = length, default_value = "50nm")]
    pub lo: f64,
    /// Upper end of the width search.
    #[arg(long, value_parser = length, default_value = "5um")]
    pub hi: f64,
    /// Bracket width at which bisection stops; defaults to the configured cutoff tolerance.
    #[arg(long, value_parser = length)]
    pub tolerance: Option<f64>,
}

#[derive(Serialize)]
struct CutoffOutput {
    cutoff_width: f64,
    tolerance: f64,
    polarization: chipbeam::mode_solver::Polarization,
    geometry: WaveguideGeometry,
}

pub fn cutoff(ctx: &Context, a: CutoffArgs) -> CmdResult {
    let geom = a.geom.geometry(ctx)?;
    // Wide cores make fine grids slow; 20 nm keeps the search to seconds per step.
    let spec = a.geom.grid_spec(20e-9);
    let search = CutoffOptions {
        lo: a.lo,
        hi: a.hi,
        tolerance: a.tolerance.unwrap_or(ctx.config.tolerances.cutoff_width),
    };
    let w = single_mode_cutoff_width(&geom, &spec, a.geom.polarization, &solver_options(ctx), &search)?;
    print_json(&CutoffOutput {
        cutoff_width: w,
        tolerance: search.tolerance,
        polarization: a.geom.polarization,
        geometry: geom,
    })
}

#[derive(Debug, Args)]
pub struct TaperArgs {
    #[command(flatten)]
    pub geom: GeometryArgs,
    #[arg(long, value_parser = length, default_value = "500nm")]
    pub start_width: f64,
    #[arg(long, value_parser = length, default_value = "125nm")]
    pub end_width: f64,
    #[arg(long, value_parser = length, default_value = "100um")]
    pub length: f64,
    #[arg(long, default_value_t = 64)]
    pub segments: usize,
    /// Safety factor on the local half-angle limit.
    #[arg(long, value_parser = positive, default_value = "1")]
    pub alpha: f64,
}

#[derive(Serialize)]
struct TipMfd {
    width: f64,
    mfd_x: f64,
    mfd_y: f64,
}

#[derive(Serialize)]
struct TaperOutput {
    profile: TaperProfile,
    tip: TipMfd,
    adiabaticity: AdiabaticityReport,
}

pub fn taper(ctx: &Context, a: TaperArgs) -> CmdResult {
    let template = a.geom.geometry(ctx)?;
    let profile = TaperProfile {
        start_width: a.start_width,
        end_width: a.end_width,
        length: a.length,
        n_segments: a.segments,
        ..TaperProfile::default()
    };
    profile.validate()?;
    let spec = a.geom.grid_spec(20e-9);
    let opts = solver_options(ctx);
    let pol = a.geom.polarization;
    let tip = mfd_vs_width(&template, a.end_width, &spec, pol, &opts)?;
    let report = adiabaticity_check(&profile, &template, &spec, pol, a.alpha, &opts)?;
    let out = TaperOutput {
        profile,
        tip: TipMfd {
            width: a.end_width,
            mfd_x: tip.mfd_x,
            mfd_y: tip.mfd_y,
        },
        adiabaticity: report,
    };
    match ctx.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => print_json(&out),
        _ => {
            let mut s = String::from("position_um,width_nm,n_eff,half_angle,limit,ratio\n");
            for c in &out.adiabaticity.segments {
                s += &format!(
                    "{:.4},{:.3},{:.8},{:.6e},{:.6e},{:.6}\n",
                    c.position * 1e6,
                    c.width * 1e9,
                    c.n_eff,
                    c.half_angle,
                    c.limit,
                    c.ratio
                );
            }
            write_stdout(s.as_bytes())
        }
    }
}

#[derive(Debug, Args)]
pub struct IonChainArgs {
    /// Number of ions.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Ion mass in atomic mass units.
    #[arg(long, value_parser = positive, conflicts_with = "mass")]
    pub mass_amu: Option<f64>,
    /// Ion mass with a unit suffix (kg, g, amu).
    #[arg(long, value_parser = |s: &str| parse_mass(s).map_err(|e| e.to_string()))]
    pub mass: Option<f64>,
    /// Axial secular frequency in kHz.
    #[arg(long, value_parser = positive, conflicts_with = "axial_frequency")]
    pub axial_khz: Option<f64>,
    /// Axial secular frequency with a unit suffix (Hz, kHz, MHz).
    #[arg(long, value_parser = frequency)]
    pub axial_frequency: Option<f64>,
    /// Charge in units of the elementary charge.
    #[arg(long, value_parser = positive, default_value = "1")]
    pub charge: f64,
}

#[derive(Serialize)]
struct IonChainOutput {
    spec: IonChainSpec,
    length_scale: f64,
    dimensionless_positions: Vec<f64>,
    positions: Vec<f64>,
    gaps: Vec<f64>,
    min_gap: Option<f64>,
    residual: f64,
}

pub fn ionchain(ctx: &Context, a: IonChainArgs) -> CmdResult {
    let base = IonChainSpec::ba138_default();
    let c = &ctx.config.constants;
    let spec = IonChainSpec {
        n_ions: a.n,
        mass: a
            .mass
            .or(a.mass_amu.map(|m| m * c.atomic_mass_unit))
            .unwrap_or(base.mass / ATOMIC_MASS_UNIT * c.atomic_mass_unit),
        charge: a.charge * c.elementary_charge,
        axial_frequency: a
            .axial_frequency
            .or(a.axial_khz.map(|f| f * 1e3))
            .unwrap_or(base.axial_frequency),
    };
    let chain = physical_positions_with(&spec, c)?;
    match ctx.format.unwrap_or(OutputFormat::Csv) {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            chain.write_csv(&mut buf)?;
            write_stdout(&buf)
        }
        OutputFormat::Json => print_json(&IonChainOutput {
            spec,
            length_scale: chain.length_scale,
            gaps: gaps(&chain.positions),
            min_gap: chain.min_gap(),
            dimensionless_positions: chain.dimensionless_positions,
            positions: chain.positions,
            residual: chain.residual,
        }),
        OutputFormat::Table => {
            let mut s = format!(
                "length scale {:.4} um\n{:>5} {:>12} {:>12}\n",
                chain.length_scale * 1e6,
                "ion",
                "u",
                "x_um"
            );
            for (i, (u, x)) in chain.dimensionless_positions.iter().zip(&chain.positions).enumerate() {
                s += &format!("{i:>5} {u:>12.6} {:>12.4}\n", x * 1e6);
            }
            write_stdout(s.as_bytes())
        }
    }
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Known parameter as `name=value` (w_c, s_c, na_c, w_q, s_q, na_q, M; lengths take
    /// unit suffixes), or bare `name` to take the value from `--from`. Give exactly three.
    #[arg(long = "set", value_parser = assignment, required = true)]
    pub set: Vec<(String, Option<String>)>,
    #[arg(long, value_parser = length)]
    pub wavelength: Option<f64>,
    /// Earlier `design` JSON output supplying values for bare `--set` names.
    #[arg(long, value_name = "FILE")]
    pub from: Option<PathBuf>,
    /// Smallest ion gap; adds the chip-pitch to ion-gap ratio to the output.
    #[arg(long, value_parser = length)]
    pub min_gap: Option<f64>,
}

#[derive(Serialize)]
struct DesignOutput {
    #[serde(flatten)]
    params: DesignParameters,
    #[serde(skip_serializing_if = "Option::is_none")]
    pitch: Option<PitchCheck>,
}

pub fn design(ctx: &Context, a: DesignArgs) -> CmdResult {
    let from: Option<DesignParameters> = a.from.as_ref().map(read_json).transpose()?;
    let wavelength = a
        .wavelength
        .or(from.map(|f| f.wavelength))
        .ok_or_else(|| Failure::usage("--wavelength is required unless --from supplies it"))?;
    let mut known = Vec::with_capacity(a.set.len());
    for (name, value) in &a.set {
        let p: Param = name.parse()?;
        let v = match (value, &from) {
            (Some(text), _) if p.is_length() => parse_length(text)?,
            (Some(text), _) => parse_quantity(text, Dimension::Dimensionless)?,
            (None, Some(f)) => f.get(p),
            (None, None) => return Err(Failure::usage(format!("--set {name} has no value and no --from file"))),
        };
        known.push((p, v));
    }
    let convention = DesignConvention {
        na_constant: ctx.config.na_constant,
    };
    let params = solve_design_with(&known, wavelength, &convention)?;
    let pitch = a
        .min_gap
        .map(|g| pitch_ratio(params.s_c, g, chipbeam::design::DEFAULT_PITCH_BAND));
    match ctx.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => {
            print_json(&DesignOutput { params, pitch })?;
            eprint!("{}", params.table());
            Ok(())
        }
        OutputFormat::Table => write_stdout(params.table().as_bytes()),
        OutputFormat::Csv => {
            let mut s = String::from("parameter,value\n");
            for p in Param::ALL {
                s += &format!("{},{:e}\n", p.symbol(), params.get(p));
            }
            s += &format!("lambda,{:e}\n", params.wavelength);
            write_stdout(s.as_bytes())
        }
    }
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    /// Field CSV with header `x,y,re,im` (SI units).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_parser = length)]
    pub wavelength: f64,
    #[arg(long, value_parser = positive)]
    pub magnification: f64,
    /// Object-side numerical aperture.
    #[arg(long, value_parser = positive)]
    pub na: f64,
    /// Where to write the imaged field.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct ImageOutput {
    input_power: f64,
    output_power: f64,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    peak: (f64, f64),
}

pub fn image(_ctx: &Context, a: ImageArgs) -> CmdResult {
    let field = ScalarField2D::read_csv_file(&a.input, a.wavelength)?;
    let sys = ImagingSystemSpec::new(a.magnification, a.na)?;
    let out = image_field(&field, &sys)?;
    if let Some(p) = &a.output {
        out.write_csv_file(p)?;
    }
    let (i, j) = out.argmax();
    print_json(&ImageOutput {
        input_power: field.power(),
        output_power: out.power(),
        nx: out.nx(),
        ny: out.ny(),
        dx: out.dx(),
        dy: out.dy(),
        peak: (out.x(i), out.y(j)),
    })
}

#[derive(Debug, Args)]
pub struct CrosstalkArgs {
    /// Ion-plane field of channel k alone (CSV `x,y,re,im`); one per target, in order.
    #[arg(long = "field", value_name = "FILE", required = true)]
    pub fields: Vec<PathBuf>,
    /// Target position `x,y`; one per field, in order.
    #[arg(long = "target", value_parser = point, required = true)]
    pub targets: Vec<(f64, f64)>,
    #[arg(long, value_parser = length, default_value = "650nm")]
    pub wavelength: f64,
    /// Disc radius for the power integrals.
    #[arg(long, value_parser = length, conflicts_with = "na")]
    pub radius: Option<f64>,
    /// Image-side NA; sets the radius to lambda / (2 NA).
    #[arg(long, value_parser = positive)]
    pub na: Option<f64>,
}

#[derive(Serialize)]
struct CrosstalkOutput {
    integration_radius: f64,
    targets: Vec<(f64, f64)>,
    crosstalk_db: Vec<Vec<Option<f64>>>,
    worst_nearest_neighbor_db: Option<f64>,
}

pub fn crosstalk(ctx: &Context, a: CrosstalkArgs) -> CmdResult {
    if a.fields.len() != a.targets.len() {
        return Err(Failure::usage(format!(
            "{} fields for {} targets; give one field per target",
            a.fields.len(),
            a.targets.len()
        )));
    }
    let radius = match (a.radius, a.na) {
        (Some(r), _) => r,
        (None, Some(na)) => default_integration_radius(a.wavelength, na),
        (None, None) => return Err(Failure::usage("give --radius or --na")),
    };
    let fields = a
        .fields
        .iter()
        .map(|p| ScalarField2D::read_csv_file(p, a.wavelength))
        .collect::<Result<Vec<_>, _>>()?;
    let m = crosstalk_matrix(&fields, &a.targets, radius)?;
    let finite = |v: f64| v.is_finite().then_some(v);
    let worst = (0..m.len())
        .flat_map(|i| {
            [i.checked_sub(1), (i + 1 < m.len()).then_some(i + 1)]
                .into_iter()
                .flatten()
                .map(move |j| (i, j))
        })
        .map(|(i, j)| m[i][j])
        .filter(|v| !v.is_nan())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    match ctx.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => print_json(&CrosstalkOutput {
            integration_radius: radius,
            targets: a.targets,
            crosstalk_db: m.iter().map(|r| r.iter().map(|&v| finite(v)).collect()).collect(),
            worst_nearest_neighbor_db: worst.and_then(finite),
        }),
        _ => {
            let mut s = String::new();
            for row in &m {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
                s += &cells.join(",");
                s.push('\n');
            }
            write_stdout(s.as_bytes())
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario configuration (JSON). Omitted fields, or the whole file, take their defaults.
    #[arg(value_name = "CONFIG")]
    pub scenario: Option<PathBuf>,
    /// Override the artifact parent directory.
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Skip the slit-scan metrology stage.
    #[arg(long)]
    pub no_metrology: bool,
    /// Print the default scenario configuration and exit.
    #[arg(long)]
    pub print_default: bool,
}

fn staged(e: Error) -> Failure {
    let stage = e.stage();
    let mut f = Failure::from(e);
    if let Some(s) = stage {
        f.code = s.exit_code() as u8;
        f.stage = Some(s.to_string());
    }
    f
}

pub fn run(_ctx: &Context, a: RunArgs) -> CmdResult {
    if a.print_default {
        return print_json(&ScenarioConfig::default());
    }
    let mut cfg = match &a.scenario {
        Some(path) => ScenarioConfig::load(path).map_err(staged)?,
        None => ScenarioConfig::default(),
    };
    if let Some(d) = a.output_dir {
        cfg.output_dir = Some(d);
    }
    if a.no_metrology {
        cfg.metrology.enabled = false;
    }
    let (report, _, _) = run_scenario(&cfg).map_err(staged)?;
    print_json(&report)
}
