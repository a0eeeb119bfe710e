//! `chipbeam` command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 validation, 4 computation, 5 I/O. The `run`
//! subcommand reports a failing scenario stage as `10 + stage index` instead.
//! Every error is a single JSON line on stderr.

mod commands;
mod parse;
mod slitscan;

use std::path::PathBuf;
use std::process::ExitCode;

use chipbeam::config::{GlobalConfig, OutputFormat};
use chipbeam::{Error, ErrorKind};
use clap::{Args, Parser, Subcommand};

use crate::parse::{format_arg, length, positive};

#[derive(Debug, Parser)]
#[command(
    name = "chipbeam",
    version,
    about = "Waveguide-to-ion light delivery design and slit-scan crosstalk metrology"
)]
pub struct Cli {
    /// Global JSON configuration (constants, material indices, tolerances, output format).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output format: json, csv or table. Each command has a natural default.
    #[arg(long, global = true, value_parser = format_arg)]
    pub format: Option<OutputFormat>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Guided modes of a rectangular channel waveguide.
    Modes(commands::ModesArgs),
    /// Width at which a second guided mode appears.
    Cutoff(commands::CutoffArgs),
    /// Tip mode size and adiabaticity of an inverse taper.
    Taper(commands::TaperArgs),
    /// Equilibrium positions of a linear ion chain.
    Ionchain(commands::IonChainArgs),
    /// Complete a design from three known parameters.
    Design(commands::DesignArgs),
    /// Image a field through an ideal 4f system with a circular pupil.
    Image(commands::ImageArgs),
    /// Crosstalk matrix from single-channel ion-plane fields.
    Crosstalk(commands::CrosstalkArgs),
    /// Scanning-slit simulation and analysis.
    #[command(subcommand)]
    Slitscan(slitscan::SlitscanCommand),
    /// Run an end-to-end scenario from a JSON configuration.
    Run(commands::RunArgs),
}

/// Waveguide cross-section flags shared by the mode commands.
#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// JSON waveguide geometry; individual flags override its fields.
    #[arg(long, value_name = "FILE")]
    pub geometry: Option<PathBuf>,
    #[arg(long, value_parser = length)]
    pub width: Option<f64>,
    #[arg(long, value_parser = length)]
    pub thickness: Option<f64>,
    #[arg(long, value_parser = length)]
    pub wavelength: Option<f64>,
    /// Core index; defaults to the configured core material.
    #[arg(long, value_parser = positive)]
    pub n_core: Option<f64>,
    /// Cladding index; defaults to the configured cladding material.
    #[arg(long, value_parser = positive)]
    pub n_clad: Option<f64>,
    /// Grid spacing in both directions.
    #[arg(long, value_parser = length)]
    pub dx: Option<f64>,
    /// Cladding margin around the core (at least 2 um).
    #[arg(long, value_parser = length)]
    pub margin: Option<f64>,
    #[arg(long, default_value = "TE")]
    pub polarization: chipbeam::mode_solver::Polarization,
}

pub struct Context {
    pub config: GlobalConfig,
    pub format: Option<OutputFormat>,
}

/// Failure of a command, already classified for the exit code.
pub struct Failure {
    pub kind: &'static str,
    pub code: u8,
    pub stage: Option<String>,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, code) = match e.kind() {
            ErrorKind::Validation => ("validation", 3),
            ErrorKind::Computation => ("computation", 4),
            ErrorKind::Io => ("io", 5),
        };
        Failure {
            kind,
            code,
            stage: None,
            message: e.to_string(),
        }
    }
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            kind: "usage",
            code: 2,
            stage: None,
            message: message.into(),
        }
    }
}

fn report(f: &Failure) {
    let line = serde_json::json!({
        "error": f.kind,
        "stage": f.stage,
        "exit_code": f.code,
        "message": f.message.replace('\n', " "),
    });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(
                e.kind(),
                K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                };
            }
            // Keep clap's message (which may continue on indented lines) but not the
            // usage synopsis and hint that follow it.
            let text = e.to_string();
            let message: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            let message = message.join(" ");
            let message = message.trim_start_matches("error: ");
            report(&Failure::usage(if message.is_empty() {
                "usage error"
            } else {
                message
            }));
            return ExitCode::from(2);
        }
    };
    let config = match &cli.config {
        Some(path) => match GlobalConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                report(&Failure::from(e));
                return ExitCode::from(3);
            }
        },
        None => GlobalConfig::default(),
    };
    let ctx = Context {
        config,
        format: cli.format,
    };
    let result = match cli.command {
        Command::Modes(a) => commands::modes(&ctx, a),
        Command::Cutoff(a) => commands::cutoff(&ctx, a),
        Command::Taper(a) => commands::taper(&ctx, a),
        Command::Ionchain(a) => commands::ionchain(&ctx, a),
        Command::Design(a) => commands::design(&ctx, a),
        Command::Image(a) => commands::image(&ctx, a),
        Command::Crosstalk(a) => commands::crosstalk(&ctx, a),
        Command::Slitscan(c) => slitscan::dispatch(&ctx, c),
        Command::Run(a) => commands::run(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(&f);
            ExitCode::from(f.code)
        }
    }
}
