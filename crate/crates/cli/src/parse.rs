//! Argument parsers for unit-suffixed quantities.

use chipbeam::config::OutputFormat;
use chipbeam::units::{parse_frequency, parse_length, parse_quantity, Dimension};

pub fn length(s: &str) -> Result<f64, String> {
    parse_length(s).map_err(|e| e.to_string())
}

pub fn frequency(s: &str) -> Result<f64, String> {
    parse_frequency(s).map_err(|e| e.to_string())
}

pub fn positive(s: &str) -> Result<f64, String> {
    let v = parse_quantity(s, Dimension::Dimensionless).map_err(|e| e.to_string())?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("`{s}` must be positive"))
    }
}

pub fn format_arg(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: chipbeam::Error| e.to_string())
}

/// `x,y` pair of lengths.
pub fn point(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("`{s}` is not an `x,y` pair"))?;
    Ok((length(a.trim())?, length(b.trim())?))
}

/// `x0,x1,y0,y1` rectangle of lengths.
pub fn rect(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("`{s}` is not `x0,x1,y0,y1`"));
    }
    let mut out = [0.0; 4];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = length(p.trim())?;
    }
    Ok(out)
}

/// `name=value` or bare `name` for a design parameter.
pub fn assignment(s: &str) -> Result<(String, Option<String>), String> {
    match s.split_once('=') {
        Some((k, v)) => Ok((k.trim().to_string(), Some(v.trim().to_string()))),
        None => Ok((s.trim().to_string(), None)),
    }
}
