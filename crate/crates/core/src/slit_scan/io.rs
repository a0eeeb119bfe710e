use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Profile1D, ScanTrace};
use crate::error::{Error, Result};

/// Scan metadata stored next to a trace CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub slit_width_um: f64,
    pub step_um: f64,
    #[serde(default)]
    pub slit_height_mm: Option<f64>,
    #[serde(default)]
    pub modulation_hz: Option<f64>,
    /// Mean additive background, same units as the intensity column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_floor: Option<f64>,
}

/// `trace.csv` pairs with `trace.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Parse(format!("{}: {e}", path.display()))
}

/// Write `position_um,intensity`.
pub fn write_profile_csv(profile: &Profile1D, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["position_um", "intensity"]).map_err(csv_err(path))?;
    for (x, v) in profile.positions.iter().zip(&profile.values) {
        w.write_record(&[format!("{:.9}", x * 1e6), format!("{v:.12e}")])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_profile_csv(path: &Path) -> Result<Profile1D> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    if headers.len() < 2 || headers[0].trim() != "position_um" || headers[1].trim() != "intensity" {
        return Err(Error::Parse(format!(
            "{}: expected header position_um,intensity",
            path.display()
        )));
    }
    let mut positions = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("{}: bad number on data row {}", path.display(), line + 1)))
        };
        positions.push(num(0)? * 1e-6);
        values.push(num(1)?);
    }
    Profile1D::new(positions, values)
}

/// Write the trace CSV and its JSON sidecar.
pub fn write_trace(trace: &ScanTrace, path: &Path) -> Result<()> {
    write_profile_csv(&trace.profile(), path)?;
    let side = TraceSidecar {
        slit_width_um: trace.slit_width * 1e6,
        step_um: trace.step * 1e6,
        slit_height_mm: Some(trace.slit_height * 1e3),
        modulation_hz: trace.modulation_hz,
        noise_floor: trace.noise_floor,
    };
    let sp = sidecar_path(path);
    let text = serde_json::to_string_pretty(&side).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(&sp, text + "\n").map_err(|e| Error::io(&sp, e))
}

/// Read a trace CSV and the sidecar beside it.
pub fn read_trace(path: &Path) -> Result<ScanTrace> {
    let profile = read_profile_csv(path)?;
    let sp = sidecar_path(path);
    let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: TraceSidecar = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", sp.display())))?;
    let trace = ScanTrace {
        positions: profile.positions,
        values: profile.values,
        slit_width: side.slit_width_um * 1e-6,
        slit_height: side.slit_height_mm.unwrap_or(0.0) * 1e-3,
        step: side.step_um * 1e-6,
        noise_floor: side.noise_floor,
        modulation_hz: side.modulation_hz,
    };
    trace.validate()?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = ScanTrace {
            positions: (0..20).map(|k| -5e-6 + k as f64 * 1e-6).collect(),
            values: (0..20).map(|k| (k as f64 * 0.3).sin().abs()).collect(),
            slit_width: 5e-6,
            slit_height: 1.6e-3,
            step: 1e-6,
            noise_floor: Some(1e-5),
            modulation_hz: Some(28.1e3),
        };
        write_trace(&t, &path).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back.values.len(), 20);
        for (a, b) in back.positions.iter().zip(&t.positions) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in back.values.iter().zip(&t.values) {
            assert!((a - b).abs() <= 1e-11 * b.max(1e-300));
        }
        assert!((back.slit_width - 5e-6).abs() < 1e-18);
        assert_eq!(back.modulation_hz, Some(28.1e3));
    }

    #[test]
    fn missing_sidecar_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_profile_csv(&Profile1D::new(vec![0.0, 1e-6], vec![1.0, 2.0]).unwrap(), &path).unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Io { .. })));
    }
}
