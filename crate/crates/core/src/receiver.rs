//! Bob's receiver: a first beamsplitter creates a path qubit, a phase
//! modulator on the upper arm and a half-wave plate on the lower arm encode
//! Bob's setting, and a second beamsplitter followed by two polarizing
//! beamsplitters performs the single-photon Bell-state measurement.
//!
//! ```text
//!  a ─┐          ┌─ c ─ PM(φ_B) ─ e ─┐          ┌─ k ─ PBS ─ H: D1, V: D2
//!     BS(t1)                         BS(t2)
//!  b ─┘          └─ d ─ HWP ─────── f ─┘          └─ g ─ PBS ─ H: D3, V: D4
//! ```
//!
//! Along with the network, this module carries the closed-form detector
//! amplitudes for the balanced and the general (unbalanced, arbitrary input
//! polarization) receiver. Those are used as independent checks of the
//! propagated network.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::{deserialize_angle, Bb84Phase};
use crate::error::{Error, Result};
use crate::optics::{self, BeamSplitter, ComplexAmp, Element, Mode, OpticalState, PolAmplitude};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverConfig {
    /// Power fraction of the input sent to the phase-modulator arm.
    #[serde(default = "half")]
    pub t1: f64,
    /// Power fraction of the phase-modulator arm routed to the D1/D2 output.
    #[serde(default = "half")]
    pub t2: f64,
    /// Systematic deviation added by the phase modulator to every setting.
    #[serde(default, deserialize_with = "deserialize_angle")]
    pub phase_offset: f64,
    #[serde(default = "all_active")]
    pub active_detectors: [bool; 4],
}

fn half() -> f64 {
    0.5
}

fn all_active() -> [bool; 4] {
    [true; 4]
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            t1: 0.5,
            t2: 0.5,
            phase_offset: 0.0,
            active_detectors: [true; 4],
        }
    }
}

impl ReceiverConfig {
    pub fn single_detector(index: usize) -> Self {
        let mut active = [false; 4];
        active[index] = true;
        Self {
            active_detectors: active,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("t1", self.t1), ("t2", self.t2)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Validation(format!("{name}={t} outside (0, 1)")));
            }
        }
        if !self.phase_offset.is_finite() {
            return Err(Error::Validation("phase_offset is not finite".into()));
        }
        if !self.active_detectors.iter().any(|&a| a) {
            return Err(Error::Validation("at least one detector must be active".into()));
        }
        Ok(())
    }

    /// Same receiver seen at a different wavelength.
    pub fn with_splitting(&self, t1: f64, t2: f64) -> Self {
        Self { t1, t2, ..self.clone() }
    }
}

/// Builds the six-element receiver network for Bob's nominal setting `phi_b`.
/// The modulator applies `phi_b + cfg.phase_offset`.
pub fn build_receiver(cfg: &ReceiverConfig, phi_b: f64) -> Result<Vec<Element>> {
    cfg.validate()?;
    // The second splitter's element frame has the HWP arm as input 1, so its
    // own transmittance is 1 - t2.
    Ok(vec![
        Element::BeamSplitter(BeamSplitter::new(cfg.t1, (Mode::A, Mode::B), (Mode::C, Mode::D))?),
        Element::phase_modulator(phi_b + cfg.phase_offset, Mode::C, Mode::E)?,
        Element::HalfWavePlate { input: Mode::D, output: Mode::F },
        Element::BeamSplitter(BeamSplitter::new(1.0 - cfg.t2, (Mode::F, Mode::E), (Mode::K, Mode::G))?),
        Element::pbs(Mode::G, Mode::D3, Mode::D4)?,
        Element::pbs(Mode::K, Mode::D1, Mode::D2)?,
    ])
}

/// Coherent pulse of mean photon number `2·mu` in polarization
/// `√γ|H⟩ + e^{iφ_E}√(1−γ)|V⟩` on mode `a`, vacuum on `b`.
pub fn pulse_input(mu: f64, phi_e: f64, gamma: f64) -> Result<OpticalState> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Validation(format!("mean photon number {mu} must be >= 0")));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Validation(format!("gamma={gamma} outside [0, 1]")));
    }
    let alpha = (2.0 * mu).sqrt();
    let a = PolAmplitude::new(
        Complex64::from(alpha * gamma.sqrt()),
        Complex64::from_polar(alpha * (1.0 - gamma).sqrt(), phi_e),
    );
    OpticalState::new()
        .with(Mode::A, a)?
        .with(Mode::B, PolAmplitude::VACUUM)
}

/// Single photon in `(|H⟩ + e^{iθ}|V⟩)/√2`, as a unit-norm amplitude vector.
pub fn single_photon_input(theta: f64) -> Result<OpticalState> {
    pulse_input(0.5, theta, 0.5)
}

/// The non-vacuum polarization amplitude at each detector port.
pub fn port_amplitudes(state: &OpticalState) -> Result<[ComplexAmp; 4]> {
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (i, port) in Mode::DETECTOR_PORTS.into_iter().enumerate() {
        let amp = state
            .get(port)
            .ok_or_else(|| Error::Contract(format!("detector port {port} is not populated")))?;
        // D1 and D3 sit on the reflected (H) side of their PBS.
        out[i] = if i % 2 == 0 { amp.h } else { amp.v };
    }
    Ok(out)
}

/// Propagates a pulse through the receiver and returns the port amplitudes.
pub fn receiver_amplitudes(
    cfg: &ReceiverConfig,
    phi_b: f64,
    mu: f64,
    phi_e: f64,
    gamma: f64,
) -> Result<[ComplexAmp; 4]> {
    let out = optics::propagate(&build_receiver(cfg, phi_b)?, &pulse_input(mu, phi_e, gamma)?)?;
    port_amplitudes(&out)
}

/// Mean photon numbers at D1..D4 for a pulse propagated through the receiver.
pub fn detector_energies(
    cfg: &ReceiverConfig,
    phi_b: f64,
    mu: f64,
    phi_e: f64,
    gamma: f64,
) -> Result<[f64; 4]> {
    let out = optics::propagate(&build_receiver(cfg, phi_b)?, &pulse_input(mu, phi_e, gamma)?)?;
    optics::energies(&out)
}

/// Single-photon click probabilities at D1..D4 for Alice's state `theta`.
pub fn single_photon_click_probabilities(cfg: &ReceiverConfig, phi_b: f64, theta: f64) -> Result<[f64; 4]> {
    let out = optics::propagate(&build_receiver(cfg, phi_b)?, &single_photon_input(theta)?)?;
    optics::single_photon_probabilities(&port_amplitudes(&out)?)
}

fn check_mu(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("mean photon number {mu} must be >= 0")))
    }
}

/// Detector amplitudes of the balanced receiver (t1 = t2 = γ = 1/2):
/// `(√μ/2)·(e^{iφ_E} ± e^{iφ_B})` on D1/D3 and `(√μ/2)·(1 ± e^{i(φ_E+φ_B)})` on D2/D4.
pub fn balanced_closed_form(mu: f64, phi_e: f64, phi_b: f64) -> Result<[ComplexAmp; 4]> {
    check_mu(mu)?;
    let k = mu.sqrt() / 2.0;
    let ee = Complex64::from_polar(1.0, phi_e);
    let eb = Complex64::from_polar(1.0, phi_b);
    let es = Complex64::from_polar(1.0, phi_e + phi_b);
    let one = Complex64::new(1.0, 0.0);
    Ok([(ee + eb) * k, (one + es) * k, (ee - eb) * k, (one - es) * k])
}

/// Detector amplitudes for splitting ratios `t1`, `t2` and input polarization
/// weight `gamma`, with `α = √(2μ)` and `x̂ = 1 − x`.
pub fn general_closed_form(
    mu: f64,
    phi_e: f64,
    gamma: f64,
    t1: f64,
    t2: f64,
    phi_b: f64,
) -> Result<[ComplexAmp; 4]> {
    check_mu(mu)?;
    for (name, x) in [("gamma", gamma), ("t1", t1), ("t2", t2)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Validation(format!("{name}={x} outside [0, 1]")));
        }
    }
    let alpha = (2.0 * mu).sqrt();
    let (u1, u2, g) = (1.0 - t1, 1.0 - t2, 1.0 - gamma);
    let ee = Complex64::from_polar(1.0, phi_e);
    let eb = Complex64::from_polar(1.0, phi_b);
    let es = Complex64::from_polar(1.0, phi_e + phi_b);
    let r = |x: f64| Complex64::from(x.sqrt());
    Ok([
        (r(u1 * u2 * g) * ee + r(t1 * t2 * gamma) * eb) * alpha,
        (r(u1 * u2 * gamma) + r(t1 * t2 * g) * es) * alpha,
        (r(u1 * t2 * g) * ee - r(t1 * u2 * gamma) * eb) * alpha,
        (r(u1 * t2 * gamma) - r(t1 * u2 * g) * es) * alpha,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellOutcome {
    PsiPlus,
    PhiPlus,
    PsiMinus,
    PhiMinus,
    NoClick,
    DoubleClick,
}

impl BellOutcome {
    pub const SINGLE: [BellOutcome; 4] = [
        BellOutcome::PsiPlus,
        BellOutcome::PhiPlus,
        BellOutcome::PsiMinus,
        BellOutcome::PhiMinus,
    ];

    /// Index of the detector that produced a single click.
    pub fn detector(self) -> Option<usize> {
        BellOutcome::SINGLE.iter().position(|&o| o == self)
    }

    pub fn is_single_click(self) -> bool {
        self.detector().is_some()
    }

    pub fn label(self) -> &'static str {
        match self {
            BellOutcome::PsiPlus => "psi+",
            BellOutcome::PhiPlus => "phi+",
            BellOutcome::PsiMinus => "psi-",
            BellOutcome::PhiMinus => "phi-",
            BellOutcome::NoClick => "none",
            BellOutcome::DoubleClick => "double",
        }
    }
}

impl fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn bell_outcome(clicks: [bool; 4]) -> BellOutcome {
    let mut fired = clicks.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i);
    match (fired.next(), fired.next()) {
        (None, _) => BellOutcome::NoClick,
        (Some(i), None) => BellOutcome::SINGLE[i],
        (Some(_), Some(_)) => BellOutcome::DoubleClick,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Table1Row {
    pub phi_e: f64,
    pub phi_b: f64,
    pub energies: [f64; 4],
}

/// Detector energies for every pair of BB84 phases of Eve and Bob on the
/// balanced receiver, ordered by Eve's phase, then Bob's.
pub fn table1(mu: f64) -> Result<Vec<Table1Row>> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Validation(format!("mean photon number {mu} must be > 0")));
    }
    let cfg = ReceiverConfig::default();
    let mut rows = Vec::with_capacity(16);
    for eve in Bb84Phase::ALL {
        for bob in Bb84Phase::ALL {
            rows.push(Table1Row {
                phi_e: eve.radians(),
                phi_b: bob.radians(),
                energies: detector_energies(&cfg, bob.radians(), mu, eve.radians(), 0.5)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    pub phi_b: f64,
    pub delta_phi_b: f64,
    pub t1: f64,
    pub t2: f64,
    pub gamma: f64,
    pub points: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            phi_b: std::f64::consts::FRAC_PI_2,
            delta_phi_b: 0.0,
            t1: 0.5,
            t2: 0.5,
            gamma: 0.5,
            points: 721,
        }
    }
}

/// Normalized detector energies (energy ÷ μ) over `φ_E ∈ [0, 2π]`.
pub fn energy_sweep(params: &SweepParams) -> Result<Vec<(f64, [f64; 4])>> {
    if params.points < 2 {
        return Err(Error::Validation("a sweep needs at least two points".into()));
    }
    let cfg = ReceiverConfig {
        t1: params.t1,
        t2: params.t2,
        phase_offset: params.delta_phi_b,
        active_detectors: [true; 4],
    };
    let network = build_receiver(&cfg, params.phi_b)?;
    let step = TAU / (params.points - 1) as f64;
    (0..params.points)
        .map(|i| {
            let phi_e = i as f64 * step;
            let out = optics::propagate(&network, &pulse_input(1.0, phi_e, params.gamma)?)?;
            Ok((phi_e, optics::energies(&out)?))
        })
        .collect()
}
