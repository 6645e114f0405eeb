//! Physical constants and unit-suffixed quantity parsing.
//!
//! Every physical quantity in a configuration file is a string such as
//! `"4.98 GHz"` or `"119 fJ"`. Frequencies given in Hz-family units are
//! ordinary frequencies and are converted to angular frequency (rad/s) on
//! load; `rad/s` is accepted verbatim.

use crate::error::{Error, Result};
use std::f64::consts::TAU;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Angular frequency of `f` hertz.
pub fn hz(f: f64) -> f64 {
    TAU * f
}

pub fn mhz(f: f64) -> f64 {
    hz(f * 1e6)
}

pub fn ghz(f: f64) -> f64 {
    hz(f * 1e9)
}

pub fn khz(f: f64) -> f64 {
    hz(f * 1e3)
}

/// Optical angular frequency for a vacuum wavelength in metres.
pub fn omega_from_wavelength(lambda: f64) -> f64 {
    TAU * SPEED_OF_LIGHT / lambda
}

/// Quantity dimension expected by a configuration field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Angular frequency, stored in rad/s.
    AngularFrequency,
    /// Energy, stored in joules.
    Energy,
    /// Time, stored in nanoseconds.
    TimeNs,
    /// Time, stored in microseconds.
    TimeUs,
    /// Length, stored in metres.
    Length,
    /// Speed, stored in m/s.
    Speed,
    /// Event rate, stored per ns. Hz-family units count events, no `2 pi`.
    EventRate,
}

fn split(raw: &str) -> Result<(f64, &str)> {
    let s = raw.trim();
    // longest numeric prefix, so exponents like `1e8` stay with the number
    let (value, unit) = s
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(s.len()))
        .rev()
        .find_map(|i| s[..i].trim().parse::<f64>().ok().map(|v| (v, s[i..].trim())))
        .ok_or_else(|| Error::Config(format!("cannot parse number in '{raw}'")))?;
    if unit.is_empty() {
        return Err(Error::Config(format!("quantity '{raw}' has no unit suffix")));
    }
    Ok((value, unit))
}

/// Parses a unit-suffixed quantity into the internal unit for `dim`.
pub fn parse_quantity(raw: &str, dim: Dimension) -> Result<f64> {
    let (v, unit) = split(raw)?;
    let bad = || Error::Config(format!("unit '{unit}' not valid for {dim:?} in '{raw}'"));
    let out = match dim {
        Dimension::AngularFrequency => match unit {
            "rad/s" => v,
            "Hz" => hz(v),
            "kHz" => khz(v),
            "MHz" => mhz(v),
            "GHz" => ghz(v),
            "THz" => hz(v * 1e12),
            _ => return Err(bad()),
        },
        Dimension::Energy => match unit {
            "J" => v,
            "mJ" => v * 1e-3,
            "uJ" | "µJ" => v * 1e-6,
            "nJ" => v * 1e-9,
            "pJ" => v * 1e-12,
            "fJ" => v * 1e-15,
            "aJ" => v * 1e-18,
            _ => return Err(bad()),
        },
        Dimension::TimeNs | Dimension::TimeUs => {
            let ns = match unit {
                "s" => v * 1e9,
                "ms" => v * 1e6,
                "us" | "µs" => v * 1e3,
                "ns" => v,
                "ps" => v * 1e-3,
                _ => return Err(bad()),
            };
            if dim == Dimension::TimeUs {
                ns * 1e-3
            } else {
                ns
            }
        }
        Dimension::Length => match unit {
            "m" => v,
            "mm" => v * 1e-3,
            "um" | "µm" => v * 1e-6,
            "nm" => v * 1e-9,
            _ => return Err(bad()),
        },
        Dimension::EventRate => match unit {
            "/ns" => v,
            "/us" | "/µs" => v * 1e-3,
            "/ms" => v * 1e-6,
            "/s" | "Hz" => v * 1e-9,
            "kHz" => v * 1e-6,
            "MHz" => v * 1e-3,
            "GHz" => v,
            _ => return Err(bad()),
        },
        Dimension::Speed => match unit {
            "m/s" => v,
            "km/s" => v * 1e3,
            _ => return Err(bad()),
        },
    };
    if !out.is_finite() {
        return Err(Error::Config(format!("non-finite quantity '{raw}'")));
    }
    Ok(out)
}
