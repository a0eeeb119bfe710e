//! `slitscan` subcommands.

use std::path::PathBuf;

use chipbeam::slit_scan::{
    deconvolve_with, extract_crosstalk, fiber_scan_background_ratio, read_profile_csv, read_trace, simulate_scan,
    stitch_scans, two_peak_profile, write_profile_csv, write_trace, DeconvolutionOptions, ExtractOptions, NoiseModel,
    Profile1D, Rect, ScanSettings, ScanTrace, TwoPeakProfile,
};
use chipbeam::{Error, ScalarField2D};
use clap::{Args, Subcommand};
use serde::Serialize;

use crate::commands::{print_json, CmdResult};
use crate::parse::{length, point, positive, rect};
use crate::{Context, Failure};

#[derive(Debug, Subcommand)]
pub enum SlitscanCommand {
    /// Convolve a profile with the slit and sample it on the scan lattice.
    Simulate(SimulateArgs),
    /// Recover the profile under a trace by iterative deconvolution.
    Deconvolve(DeconvolveArgs),
    /// Join overlapping traces, matching gains on the shared peaks.
    Stitch(StitchArgs),
    /// Crosstalk of a peak into the region between it and its neighbour.
    Extract(ExtractArgs),
    /// Background-to-peak ratio of a raw 2D fiber scan.
    FiberBackground(FiberArgs),
}

pub fn dispatch(ctx: &Context, c: SlitscanCommand) -> CmdResult {
    match c {
        SlitscanCommand::Simulate(a) => simulate(ctx, a),
        SlitscanCommand::Deconvolve(a) => deconvolve(ctx, a),
        SlitscanCommand::Stitch(a) => stitch(a),
        SlitscanCommand::Extract(a) => extract(a),
        SlitscanCommand::FiberBackground(a) => fiber(a),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Input profile CSV (`position_um,intensity`).
    #[arg(long, value_name = "FILE", required_unless_present = "two_peaks")]
    pub profile: Option<PathBuf>,
    /// Synthetic profile of two Gaussians: `separation,sigma`.
    #[arg(long, value_parser = point, conflicts_with = "profile")]
    pub two_peaks: Option<(f64, f64)>,
    /// Flat pedestal for `--two-peaks`, dB relative to the peak.
    #[arg(long, allow_hyphen_values = true)]
    pub pedestal_db: Option<f64>,
    /// Sample spacing of the synthetic profile.
    #[arg(long, value_parser = length, default_value = "0.25um")]
    pub profile_step: f64,
    #[arg(long, value_parser = length, default_value = "5um")]
    pub slit_width: f64,
    #[arg(long, value_parser = length, default_value = "1um")]
    pub step: f64,
    #[arg(long, value_parser = length, default_value = "1.6mm")]
    pub slit_height: f64,
    #[arg(long, value_parser = length, allow_hyphen_values = true)]
    pub start: Option<f64>,
    #[arg(long, value_parser = length, allow_hyphen_values = true)]
    pub end: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub modulation_hz: Option<f64>,
    /// Mean additive noise floor, dB relative to the trace maximum.
    #[arg(long, allow_hyphen_values = true)]
    pub noise_floor_db: Option<f64>,
    /// Standard deviation of multiplicative noise.
    #[arg(long, default_value_t = 0.0)]
    pub proportional_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overall gain applied to the recorded trace.
    #[arg(long, value_parser = positive, default_value = "1")]
    pub gain: f64,
    /// Output trace CSV; a JSON sidecar is written next to it.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct TraceSummary {
    path: PathBuf,
    samples: usize,
    start: f64,
    end: f64,
    max: f64,
    noise_floor: Option<f64>,
}

fn summarize(trace: &ScanTrace, path: PathBuf) -> TraceSummary {
    TraceSummary {
        path,
        samples: trace.values.len(),
        start: trace.positions[0],
        end: trace.positions[trace.positions.len() - 1],
        max: trace.values.iter().copied().fold(0.0, f64::max),
        noise_floor: trace.noise_floor,
    }
}

fn simulate(_ctx: &Context, a: SimulateArgs) -> CmdResult {
    let profile = match (&a.profile, a.two_peaks) {
        (Some(p), _) => read_profile_csv(p)?,
        (None, Some((sep, sigma))) => two_peak_profile(&TwoPeakProfile {
            centre: 0.0,
            separation: sep,
            sigma,
            pedestal_db: a.pedestal_db,
            // Wide enough for the requested scan range as well as both peaks.
            half_range: [a.start, a.end]
                .into_iter()
                .flatten()
                .map(f64::abs)
                .fold(0.5 * sep + 10.0 * sigma, f64::max)
                + 2.0 * a.slit_width,
            sample_step: a.profile_step,
        })?,
        (None, None) => return Err(Failure::usage("give --profile or --two-peaks")),
    };
    let settings = ScanSettings {
        slit_width: a.slit_width,
        step: a.step,
        slit_height: a.slit_height,
        start: a.start,
        end: a.end,
        modulation_hz: a.modulation_hz,
    };
    let noise = NoiseModel {
        floor_db: a.noise_floor_db,
        proportional: a.proportional_noise,
        seed: a.seed,
    };
    let trace = simulate_scan(&profile, &settings, &noise)?.scaled(a.gain);
    write_trace(&trace, &a.out)?;
    print_json(&summarize(&trace, a.out))
}

#[derive(Debug, Args)]
pub struct DeconvolveArgs {
    /// Trace CSV with its JSON sidecar.
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
    /// Iteration cap; defaults to the configured value.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Relative residual at which to stop; defaults to the configured value.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Output profile CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct DeconvolveSummary {
    path: PathBuf,
    iterations: usize,
    residual: f64,
    converged: bool,
}

fn deconvolve(ctx: &Context, a: DeconvolveArgs) -> CmdResult {
    let trace = read_trace(&a.trace)?;
    let t = &ctx.config.tolerances;
    let opts = DeconvolutionOptions {
        iterations: a.iterations.unwrap_or(t.deconvolution_iterations),
        tolerance: a.tolerance.unwrap_or(t.deconvolution_residual),
    };
    let d = deconvolve_with(&trace, &opts)?;
    write_profile_csv(&d.profile, &a.out)?;
    if !d.converged {
        eprintln!(
            "{}",
            serde_json::json!({"warning": "not_converged", "iterations": d.iterations, "residual": d.residual})
        );
    }
    print_json(&DeconvolveSummary {
        path: a.out,
        iterations: d.iterations,
        residual: d.residual,
        converged: d.converged,
    })
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    /// Trace CSVs in scan order; each needs its JSON sidecar.
    #[arg(long = "trace", value_name = "FILE", required = true)]
    pub traces: Vec<PathBuf>,
    /// Smallest acceptable overlap between neighbours.
    #[arg(long, value_parser = length, default_value = "0.5mm")]
    pub min_overlap: f64,
    /// Output trace CSV; a JSON sidecar is written next to it.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct StitchSummary {
    #[serde(flatten)]
    trace: TraceSummary,
    gains: Vec<f64>,
}

fn stitch(a: StitchArgs) -> CmdResult {
    let scans = a.traces.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>, _>>()?;
    let s = stitch_scans(&scans, a.min_overlap)?;
    write_trace(&s.data, &a.out)?;
    print_json(&StitchSummary {
        trace: summarize(&s.data, a.out),
        gains: s.gains,
    })
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Profile CSV (`position_um,intensity`).
    #[arg(long, value_name = "FILE")]
    pub profile: PathBuf,
    /// Position of the reference peak.
    #[arg(long, value_parser = length, allow_hyphen_values = true)]
    pub peak_a: f64,
    /// Position of the neighbouring peak.
    #[arg(long, value_parser = length, allow_hyphen_values = true)]
    pub peak_b: f64,
    /// Number of samples averaged in the window.
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    /// Samples either side of each hint searched for the maximum.
    #[arg(long, default_value_t = 3)]
    pub search_steps: usize,
    /// Absolute background level below which the window mean is not resolved.
    #[arg(long)]
    pub noise_floor: Option<f64>,
}

fn extract(a: ExtractArgs) -> CmdResult {
    let profile: Profile1D = read_profile_csv(&a.profile)?;
    let opts = ExtractOptions {
        n_points: a.points,
        search_steps: a.search_steps,
        noise_floor: a.noise_floor,
    };
    print_json(&extract_crosstalk(&profile, a.peak_a, a.peak_b, &opts)?)
}

#[derive(Debug, Args)]
pub struct FiberArgs {
    /// Raw scan plane as CSV `x,y,re,im`; intensity is `re^2 + im^2`.
    #[arg(long, value_name = "FILE")]
    pub plane: PathBuf,
    /// Approximate peak position `x,y`.
    #[arg(long, value_parser = point, allow_hyphen_values = true)]
    pub peak: (f64, f64),
    /// Background rectangle `x0,x1,y0,y1`.
    #[arg(long, value_parser = rect, allow_hyphen_values = true)]
    pub region: [f64; 4],
    /// Radius around the peak the region must stay clear of.
    #[arg(long, value_parser = length, default_value = "10um")]
    pub exclusion: f64,
}

#[derive(Serialize)]
struct FiberOutput {
    /// `None` when the background holds no signal.
    ratio_db: Option<f64>,
    below_floor: bool,
}

fn fiber(a: FiberArgs) -> CmdResult {
    // The wavelength does not enter the ratio.
    let plane = ScalarField2D::read_csv_file(&a.plane, 1.0)?;
    let [x0, x1, y0, y1] = a.region;
    let r = fiber_scan_background_ratio(&plane, a.peak, &Rect { x0, x1, y0, y1 }, a.exclusion)?;
    if r.is_nan() {
        return Err(Error::InvalidInput("peak intensity is zero".into()).into());
    }
    print_json(&FiberOutput {
        ratio_db: r.is_finite().then_some(r),
        below_floor: !r.is_finite(),
    })
}
