//! Unit strings accepted by the circuit description format.
//!
//! A unit is an optional SI prefix followed by one of the base units below.
//! Everything is normalised to SI at parse time.

use thiserror::Error;

/// Physical dimension of a quantity in the description format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Capacitance,
    Inductance,
    InverseInductance,
    Length,
    CapacitancePerLength,
    InductancePerLength,
    Frequency,
    AngularFrequency,
    Energy,
    Dimensionless,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitError {
    #[error("unknown unit `{0}`")]
    Unknown(String),
    #[error("unit `{unit}` has dimension {found:?}, expected {expected:?}")]
    Mismatch {
        unit: String,
        expected: Dimension,
        found: Dimension,
    },
}

const BASES: &[(&str, Dimension)] = &[
    ("rad/s", Dimension::AngularFrequency),
    ("F/m", Dimension::CapacitancePerLength),
    ("H/m", Dimension::InductancePerLength),
    ("1/H", Dimension::InverseInductance),
    ("Hz", Dimension::Frequency),
    ("eV", Dimension::Energy),
    ("F", Dimension::Capacitance),
    ("H", Dimension::Inductance),
    ("J", Dimension::Energy),
    ("m", Dimension::Length),
];

fn prefix_scale(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "a" => 1e-18,
        "f" => 1e-15,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" | "µ" | "μ" => 1e-6,
        "m" => 1e-3,
        "c" => 1e-2,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        "T" => 1e12,
        _ => return None,
    })
}

/// Parse a unit string into its SI scale factor and dimension.
pub fn parse_unit(unit: &str) -> Result<(f64, Dimension), UnitError> {
    let unit = unit.trim();
    if unit.is_empty() || unit == "1" {
        return Ok((1.0, Dimension::Dimensionless));
    }
    for (base, dim) in BASES {
        if let Some(prefix) = unit.strip_suffix(base) {
            if let Some(scale) = prefix_scale(prefix) {
                let scale = if *base == "eV" {
                    scale * crate::constants::ELEMENTARY_CHARGE
                } else {
                    scale
                };
                // "1/H" takes its prefix on the henry: 1/nH = 1e9 / H
                let scale = if *base == "1/H" { 1.0 / scale } else { scale };
                return Ok((scale, *dim));
            }
        }
    }
    // prefixed inverse henry written as 1/nH
    if let Some(rest) = unit.strip_prefix("1/") {
        if let Some(prefix) = rest.strip_suffix('H') {
            if let Some(scale) = prefix_scale(prefix) {
                return Ok((1.0 / scale, Dimension::InverseInductance));
            }
        }
    }
    Err(UnitError::Unknown(unit.to_string()))
}

/// Convert `value` expressed in `unit` to SI, checking the dimension.
pub fn to_si(value: f64, unit: &str, expected: Dimension) -> Result<f64, UnitError> {
    let (scale, dim) = parse_unit(unit)?;
    if dim != expected {
        return Err(UnitError::Mismatch {
            unit: unit.to_string(),
            expected,
            found: dim,
        });
    }
    Ok(value * scale)
}

/// SI unit name used when serialising a quantity of the given dimension.
pub fn si_name(dim: Dimension) -> &'static str {
    match dim {
        Dimension::Capacitance => "F",
        Dimension::Inductance => "H",
        Dimension::InverseInductance => "1/H",
        Dimension::Length => "m",
        Dimension::CapacitancePerLength => "F/m",
        Dimension::InductancePerLength => "H/m",
        Dimension::Frequency => "Hz",
        Dimension::AngularFrequency => "rad/s",
        Dimension::Energy => "J",
        Dimension::Dimensionless => "",
    }
}
