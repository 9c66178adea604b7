//! BB84 phase settings and angle parsing.
//!
//! Every party in the protocol picks a phase from `{0, π/2, π, 3π/2}`. The
//! `Z` basis is `{0, π}` and the `X` basis is `{π/2, 3π/2}`; the first phase of
//! each basis carries bit 0.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

const PHASE_SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    /// The two phases of this basis, bit-0 phase first.
    pub fn phases(self) -> [Bb84Phase; 2] {
        match self {
            Basis::Z => [Bb84Phase::Zero, Bb84Phase::Pi],
            Basis::X => [Bb84Phase::HalfPi, Bb84Phase::ThreeHalfPi],
        }
    }

    pub fn other(self) -> Basis {
        match self {
            Basis::Z => Basis::X,
            Basis::X => Basis::Z,
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Z => f.write_str("Z"),
            Basis::X => f.write_str("X"),
        }
    }
}

/// One of the four BB84 phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bb84Phase {
    Zero,
    HalfPi,
    Pi,
    ThreeHalfPi,
}

impl Bb84Phase {
    pub const ALL: [Bb84Phase; 4] = [
        Bb84Phase::Zero,
        Bb84Phase::HalfPi,
        Bb84Phase::Pi,
        Bb84Phase::ThreeHalfPi,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Bb84Phase {
        Self::ALL[i % 4]
    }

    pub fn radians(self) -> f64 {
        self.index() as f64 * FRAC_PI_2
    }

    /// Snaps an angle to the nearest BB84 phase, rejecting anything that is
    /// not a multiple of π/2 (modulo 2π).
    pub fn from_radians(angle: f64) -> Result<Bb84Phase> {
        if !angle.is_finite() {
            return Err(Error::Validation(format!("phase {angle} is not finite")));
        }
        let quarters = angle.rem_euclid(TAU) / FRAC_PI_2;
        let nearest = quarters.round();
        if (quarters - nearest).abs() > PHASE_SNAP_TOL {
            return Err(Error::Validation(format!(
                "phase {angle} rad is not one of 0, π/2, π, 3π/2"
            )));
        }
        Ok(Self::from_index(nearest as usize))
    }

    pub fn basis(self) -> Basis {
        match self {
            Bb84Phase::Zero | Bb84Phase::Pi => Basis::Z,
            Bb84Phase::HalfPi | Bb84Phase::ThreeHalfPi => Basis::X,
        }
    }

    /// Phase-index bit: 0 for `{0, π/2}`, 1 for `{π, 3π/2}`.
    pub fn bit(self) -> u8 {
        match self {
            Bb84Phase::Zero | Bb84Phase::HalfPi => 0,
            Bb84Phase::Pi | Bb84Phase::ThreeHalfPi => 1,
        }
    }

    /// The other phase of the same basis.
    pub fn flipped(self) -> Bb84Phase {
        Self::from_index(self.index() + 2)
    }
}

impl fmt::Display for Bb84Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bb84Phase::Zero => f.write_str("0"),
            Bb84Phase::HalfPi => f.write_str("pi/2"),
            Bb84Phase::Pi => f.write_str("pi"),
            Bb84Phase::ThreeHalfPi => f.write_str("3pi/2"),
        }
    }
}

/// Serialized as its value in radians.
impl Serialize for Bb84Phase {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.radians())
    }
}

/// Parses an angle in radians. Besides plain numbers, multiples of π are
/// accepted: `pi`, `-pi`, `0.5pi`, `0.5*pi`, `3pi/2`, `pi/36`.
pub fn parse_angle(text: &str) -> Result<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::Validation(format!("cannot parse angle '{text}'"));
    if s.is_empty() {
        return Err(bad());
    }
    let lower = s.to_ascii_lowercase();
    let Some(pos) = lower.find("pi") else {
        return lower.parse::<f64>().map_err(|_| bad());
    };
    let (head, tail) = (&lower[..pos], &lower[pos + 2..]);
    let head = head.strip_suffix('*').unwrap_or(head);
    let coeff = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let denom = match tail {
        "" => 1.0,
        t => {
            let d = t.strip_prefix('/').ok_or_else(bad)?;
            d.parse::<f64>().map_err(|_| bad())?
        }
    };
    if denom == 0.0 {
        return Err(bad());
    }
    let value = coeff * PI / denom;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// Serde helper for angle fields that accept a number (radians) or a
/// π-fraction string.
pub fn deserialize_angle<'de, D>(deserializer: D) -> std::result::Result<f64, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }
    match Raw::deserialize(deserializer)? {
        Raw::Number(x) => Ok(x),
        Raw::Text(s) => parse_angle(&s).map_err(serde::de::Error::custom),
    }
}
