use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller supplied something that violates a documented invariant.
    Validation,
    /// The inputs were fine but the numerics could not deliver a result.
    Computation,
    Io,
}

/// Pipeline stage names, used to attach provenance to scenario failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Mode,
    IonChain,
    Layout,
    Imaging,
    Crosstalk,
    Profile,
    SlitSimulate,
    Stitch,
    Deconvolve,
    Extract,
    Artifacts,
}

impl Stage {
    pub const ALL: [Stage; 12] = [
        Stage::Config,
        Stage::Mode,
        Stage::IonChain,
        Stage::Layout,
        Stage::Imaging,
        Stage::Crosstalk,
        Stage::Profile,
        Stage::SlitSimulate,
        Stage::Stitch,
        Stage::Deconvolve,
        Stage::Extract,
        Stage::Artifacts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Mode => "mode",
            Stage::IonChain => "ion_chain",
            Stage::Layout => "layout",
            Stage::Imaging => "imaging",
            Stage::Crosstalk => "crosstalk",
            Stage::Profile => "profile",
            Stage::SlitSimulate => "slit_simulate",
            Stage::Stitch => "stitch",
            Stage::Deconvolve => "deconvolve",
            Stage::Extract => "extract",
            Stage::Artifacts => "artifacts",
        }
    }

    /// Process exit code reported by the `run` subcommand when this stage fails.
    pub fn exit_code(self) -> i32 {
        10 + Stage::ALL.iter().position(|s| *s == self).unwrap_or(0) as i32
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid too coarse: fundamental n_eff moved by {delta:.3e} under refinement (tolerance {tolerance:.1e})")]
    GridTooCoarse { delta: f64, tolerance: f64 },

    #[error("no second guided mode found for widths in [{lo:.3e}, {hi:.3e}] m")]
    CutoffNotFound { lo: f64, hi: f64 },

    #[error("no guided fundamental mode at core width {width:.3e} m")]
    ModeNotGuided { width: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid overflow: channel {channel} loses {clipped:.3e} of its power at the grid edge")]
    GridOverflow { channel: usize, clipped: f64 },

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("target {index} at ({x:.4e}, {y:.4e}) m lies outside the grid")]
    TargetOutOfGrid { index: usize, x: f64, y: f64 },

    #[error("underdetermined: {0}")]
    Underdetermined(String),

    #[error("inconsistent: {0}")]
    Inconsistent(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("insufficient overlap between scans {first} and {second}: {overlap:.3e} m < {required:.3e} m")]
    InsufficientOverlap {
        first: usize,
        second: usize,
        overlap: f64,
        required: f64,
    },

    #[error("no peak detected in the overlap between scans {first} and {second}")]
    NoPeakInOverlap { first: usize, second: usize },

    #[error("window too small: {available} samples between the peaks, {requested} requested")]
    WindowTooSmall { available: usize, requested: usize },

    #[error("no local maximum within 3 steps of {hint:.4e} m")]
    PeakNotFound { hint: f64 },

    #[error("background region overlaps the exclusion disc around the peak")]
    RegionOverlap,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidGeometry(_)
            | Error::InvalidGrid(_)
            | Error::InvalidInput(_)
            | Error::GridOverflow { .. }
            | Error::Sampling(_)
            | Error::TargetOutOfGrid { .. }
            | Error::Underdetermined(_)
            | Error::Inconsistent(_)
            | Error::OutOfRange(_)
            | Error::InsufficientOverlap { .. }
            | Error::NoPeakInOverlap { .. }
            | Error::WindowTooSmall { .. }
            | Error::RegionOverlap
            | Error::Parse(_) => ErrorKind::Validation,
            Error::GridTooCoarse { .. }
            | Error::CutoffNotFound { .. }
            | Error::ModeNotGuided { .. }
            | Error::NoConvergence { .. }
            | Error::PeakNotFound { .. } => ErrorKind::Computation,
            Error::Io { .. } => ErrorKind::Io,
            Error::Stage { source, .. } => source.kind(),
        }
    }

    /// The stage a scenario failure is attributed to, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attach a stage to an error. Already-staged errors keep their original stage.
pub trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_codes_are_distinct() {
        let mut codes: Vec<i32> = Stage::ALL.iter().map(|s| s.exit_code()).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), Stage::ALL.len());
        assert!(codes.iter().all(|c| *c >= 10));
    }

    #[test]
    fn staging_is_not_nested() {
        let r: Result<()> = Err(Error::RegionOverlap);
        let e = r.stage(Stage::Extract).stage(Stage::Imaging).unwrap_err();
        assert_eq!(e.stage(), Some(Stage::Extract));
        assert_eq!(e.kind(), ErrorKind::Validation);
    }
}
