//! Basis sifting and key-bit mapping.
//!
//! Bob's key bit is the phase-index bit of his modulator setting. Alice's bit
//! is the phase-index bit of her state, flipped when the announced Bell
//! outcome signals anti-correlation in that basis. The flip table is the
//! unique one that makes the ideal honest receiver error-free; a unit test
//! re-derives it from the single-photon click probabilities.

use crate::angle::{Basis, Bb84Phase};
use crate::error::{Error, Result};
use crate::receiver::BellOutcome;

/// `FLIP[basis][detector]`: whether a click on that detector means Alice's and
/// Bob's phases differ by π.
const FLIP: [[bool; 4]; 2] = [
    // Z: D1, D2 correlated; D3, D4 anti-correlated
    [false, false, true, true],
    // X: D1, D4 correlated; D2, D3 anti-correlated
    [false, true, true, false],
];

pub fn outcome_flips(outcome: BellOutcome, basis: Basis) -> Option<bool> {
    let row = match basis {
        Basis::Z => 0,
        Basis::X => 1,
    };
    outcome.detector().map(|d| FLIP[row][d])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyBits {
    pub alice: u8,
    pub bob: u8,
}

/// Returns the key bits for a matched-basis single click, `None` when the
/// bases differ. Calling it on a no-click or double-click slot is a contract
/// violation.
pub fn sift_and_key(theta_a: Bb84Phase, phi_b: Bb84Phase, outcome: BellOutcome) -> Result<Option<KeyBits>> {
    let Some(flip) = outcome_flips(outcome, phi_b.basis()) else {
        return Err(Error::Contract(format!("cannot sift a '{outcome}' slot")));
    };
    if theta_a.basis() != phi_b.basis() {
        return Ok(None);
    }
    Ok(Some(KeyBits {
        alice: theta_a.bit() ^ u8::from(flip),
        bob: phi_b.bit(),
    }))
}
