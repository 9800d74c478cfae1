//! Strict parsing of physical quantities written as `"<number> <unit>"`.
//!
//! Every dimension has a fixed set of accepted unit spellings. Values are
//! returned in the crate's internal base unit for that dimension:
//!
//! | dimension     | base unit   | accepted units                        |
//! |---------------|-------------|---------------------------------------|
//! | length        | km          | `km`, `m`                             |
//! | micro length  | µm          | `um`, `µm`, `nm`, `mm`                |
//! | wavelength    | nm          | `nm`, `um`, `µm`                      |
//! | time          | ps          | `ps`, `ns`, `us`, `µs`, `ms`, `s`     |
//! | duration      | s           | `s`, `ms`, `min`                      |
//! | rate          | 1/s         | `/s`, `Hz`, `kHz`, `MHz`              |
//! | loss          | dB          | `dB`                                  |
//! | attenuation   | dB/km       | `dB/km`                               |
//! | dispersion    | ns/km       | `ns/km`, `ps/km`                      |
//! | angle         | rad         | `rad`, `deg`                          |
//! | drift rate    | rad/√s      | `rad/sqrt(s)`, `deg/sqrt(s)`          |

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot parse {dimension} quantity {input:?}: {reason}")]
pub struct UnitError {
    pub dimension: &'static str,
    pub input: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    MicroLength,
    Wavelength,
    Time,
    Duration,
    Rate,
    Loss,
    Attenuation,
    Dispersion,
    Angle,
    DriftRate,
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Length => "length",
            Dimension::MicroLength => "micro length",
            Dimension::Wavelength => "wavelength",
            Dimension::Time => "time",
            Dimension::Duration => "duration",
            Dimension::Rate => "rate",
            Dimension::Loss => "loss",
            Dimension::Attenuation => "attenuation",
            Dimension::Dispersion => "dispersion",
            Dimension::Angle => "angle",
            Dimension::DriftRate => "drift rate",
        }
    }

    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Length => &[("km", 1.0), ("m", 1e-3)],
            Dimension::MicroLength => &[("um", 1.0), ("µm", 1.0), ("nm", 1e-3), ("mm", 1e3)],
            Dimension::Wavelength => &[("nm", 1.0), ("um", 1e3), ("µm", 1e3)],
            Dimension::Time => &[("ps", 1.0), ("ns", 1e3), ("us", 1e6), ("µs", 1e6), ("ms", 1e9), ("s", 1e12)],
            Dimension::Duration => &[("s", 1.0), ("ms", 1e-3), ("min", 60.0)],
            Dimension::Rate => &[("/s", 1.0), ("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6)],
            Dimension::Loss => &[("dB", 1.0)],
            Dimension::Attenuation => &[("dB/km", 1.0)],
            Dimension::Dispersion => &[("ns/km", 1.0), ("ps/km", 1e-3)],
            Dimension::Angle => &[("rad", 1.0), ("deg", std::f64::consts::PI / 180.0)],
            Dimension::DriftRate => &[("rad/sqrt(s)", 1.0), ("deg/sqrt(s)", std::f64::consts::PI / 180.0)],
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses `input` as a quantity of the given dimension and returns it in the
/// dimension's base unit. A unit suffix is mandatory.
pub fn parse(input: &str, dim: Dimension) -> Result<f64, UnitError> {
    let err = |reason: &str| UnitError { dimension: dim.name(), input: input.to_string(), reason: reason.to_string() };
    let trimmed = input.trim();
    let split = trimmed
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .ok_or_else(|| err("missing unit"))?;
    let (number, unit) = trimmed.split_at(split);
    let unit = unit.trim();
    if number.is_empty() {
        return Err(err("missing number"));
    }
    let value: f64 = number.trim().parse().map_err(|_| err("invalid number"))?;
    if !value.is_finite() {
        return Err(err("non-finite value"));
    }
    let scale = dim.units().iter().find(|(name, _)| *name == unit).map(|(_, s)| *s).ok_or_else(|| {
        let accepted: Vec<_> = dim.units().iter().map(|(n, _)| *n).collect();
        err(&format!("unknown unit {unit:?}, expected one of {accepted:?}"))
    })?;
    Ok(value * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_scaling() {
        assert_eq!(parse("2 km", Dimension::Length).unwrap(), 2.0);
        assert_eq!(parse("250 m", Dimension::Length).unwrap(), 0.25);
        assert_eq!(parse("3 ns", Dimension::Time).unwrap(), 3000.0);
        assert_eq!(parse("1.55 um", Dimension::Wavelength).unwrap(), 1550.0);
        assert_eq!(parse("2.5 MHz", Dimension::Rate).unwrap(), 2.5e6);
        assert_eq!(parse("1e5 /s", Dimension::Rate).unwrap(), 1e5);
        assert_eq!(parse("15 min", Dimension::Duration).unwrap(), 900.0);
        assert!((parse("180 deg", Dimension::Angle).unwrap() - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_missing_or_wrong_units() {
        assert!(parse("2", Dimension::Length).is_err());
        assert!(parse("km", Dimension::Length).is_err());
        assert!(parse("2 ns", Dimension::Length).is_err());
        assert!(parse("2 KM", Dimension::Length).is_err());
        assert!(parse("inf km", Dimension::Length).is_err());
        assert!(parse("1..2 km", Dimension::Length).is_err());
    }
}
