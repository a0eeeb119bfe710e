//! Parsing of unit-suffixed quantities ("650nm", "73.4um", "34khz", "138amu").
//!
//! Everything is converted to SI base units on the way in. Bare numbers are
//! taken to already be in base units.

use std::fmt;

use serde::{Deserialize, Deserializer};

use crate::constants::ATOMIC_MASS_UNIT;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Frequency,
    Mass,
    Dimensionless,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dimension::Length => "length",
            Dimension::Frequency => "frequency",
            Dimension::Mass => "mass",
            Dimension::Dimensionless => "dimensionless",
        };
        f.write_str(s)
    }
}

fn suffix_scale(dim: Dimension, suffix: &str) -> Option<f64> {
    let s = suffix.to_ascii_lowercase();
    match dim {
        Dimension::Length => match s.as_str() {
            "m" => Some(1.0),
            "cm" => Some(1e-2),
            "mm" => Some(1e-3),
            "um" | "µm" | "μm" | "micron" => Some(1e-6),
            "nm" => Some(1e-9),
            "pm" => Some(1e-12),
            _ => None,
        },
        Dimension::Frequency => match s.as_str() {
            "hz" => Some(1.0),
            "khz" => Some(1e3),
            "mhz" => Some(1e6),
            "ghz" => Some(1e9),
            "thz" => Some(1e12),
            _ => None,
        },
        Dimension::Mass => match s.as_str() {
            "kg" => Some(1.0),
            "g" => Some(1e-3),
            "amu" | "u" | "da" => Some(ATOMIC_MASS_UNIT),
            _ => None,
        },
        Dimension::Dimensionless => match s.as_str() {
            "x" => Some(1.0),
            "%" => Some(1e-2),
            _ => None,
        },
    }
}

/// Split "73.4um" into ("73.4", "um").
fn split_number(text: &str) -> (&str, &str) {
    let t = text.trim();
    let end = t
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && t[i + 1..]
                        .chars()
                        .next()
                        .is_some_and(|n| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    (&t[..end], t[end..].trim())
}

/// Parse a quantity of the given dimension, returning its value in SI base units.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64> {
    let (num, suffix) = split_number(text);
    let value: f64 = num
        .parse()
        .map_err(|_| Error::Parse(format!("`{text}` is not a number with an optional unit")))?;
    let scale = if suffix.is_empty() {
        1.0
    } else {
        suffix_scale(dim, suffix).ok_or_else(|| Error::Parse(format!("unknown {dim} unit `{suffix}` in `{text}`")))?
    };
    let v = value * scale;
    if !v.is_finite() {
        return Err(Error::Parse(format!("`{text}` is not finite")));
    }
    Ok(v)
}

pub fn parse_length(text: &str) -> Result<f64> {
    parse_quantity(text, Dimension::Length)
}

pub fn parse_frequency(text: &str) -> Result<f64> {
    parse_quantity(text, Dimension::Frequency)
}

pub fn parse_mass(text: &str) -> Result<f64> {
    parse_quantity(text, Dimension::Mass)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Number(f64),
    Text(String),
}

fn deserialize_dim<'de, D: Deserializer<'de>>(d: D, dim: Dimension) -> std::result::Result<f64, D::Error> {
    match NumberOrText::deserialize(d)? {
        NumberOrText::Number(v) => Ok(v),
        NumberOrText::Text(s) => parse_quantity(&s, dim).map_err(serde::de::Error::custom),
    }
}

/// Serde helpers so config files can say either `6.5e-7` or `"650nm"`.
pub mod serde_length {
    use super::*;
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        deserialize_dim(d, Dimension::Length)
    }
    pub fn serialize<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(*v)
    }
}

pub mod serde_frequency {
    use super::*;
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        deserialize_dim(d, Dimension::Frequency)
    }
    pub fn serialize<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(*v)
    }
}

pub mod serde_mass {
    use super::*;
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        deserialize_dim(d, Dimension::Mass)
    }
    pub fn serialize<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(*v)
    }
}

/// Lengths in a list, each either a number or a unit string.
pub mod serde_length_vec {
    use super::*;
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let raw = Vec::<NumberOrText>::deserialize(d)?;
        raw.into_iter()
            .map(|v| match v {
                NumberOrText::Number(x) => Ok(x),
                NumberOrText::Text(s) => parse_length(&s).map_err(serde::de::Error::custom),
            })
            .collect()
    }
    pub fn serialize<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::Serialize;
        v.serialize(s)
    }
}

/// Optional length; `null` or absent map to `None`.
pub mod serde_length_opt {
    use super::*;
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
        match Option::<NumberOrText>::deserialize(d)? {
            None => Ok(None),
            Some(NumberOrText::Number(v)) => Ok(Some(v)),
            Some(NumberOrText::Text(s)) => parse_length(&s).map(Some).map_err(serde::de::Error::custom),
        }
    }
    pub fn serialize<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_some(x),
            None => s.serialize_none(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(parse_length("650nm").unwrap(), 650e-9);
        assert!((parse_length("73.4um").unwrap() - 73.4e-6).abs() < 1e-18);
        assert!((parse_length("73.4 µm").unwrap() - 73.4e-6).abs() < 1e-18);
        assert_eq!(parse_length("10mm").unwrap(), 10e-3);
        assert_eq!(parse_frequency("34kHz").unwrap(), 34e3);
        assert!((parse_mass("138amu").unwrap() - 138.0 * ATOMIC_MASS_UNIT).abs() < 1e-35);
        assert_eq!(parse_length("1e-6").unwrap(), 1e-6);
        assert_eq!(parse_length("2.5e-3mm").unwrap(), 2.5e-6);
        assert_eq!(parse_quantity("0.187", Dimension::Dimensionless).unwrap(), 0.187);
    }

    #[test]
    fn bad_units_are_rejected() {
        assert!(parse_length("5kg").is_err());
        assert!(parse_frequency("5nm").is_err());
        assert!(parse_length("abc").is_err());
        assert!(parse_length("").is_err());
    }
}
