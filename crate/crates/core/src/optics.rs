//! Polarization-aware propagation of coherent amplitudes through lossless
//! linear optics.
//!
//! A coherent state is fully described by one complex amplitude per
//! (spatial mode, polarization) pair, and a passive linear network maps those
//! amplitudes linearly. The same code therefore propagates single-photon
//! amplitude vectors: only the interpretation of `|amp|²` changes (mean photon
//! number vs. probability).
//!
//! Modes are consumed by the element that reads them and populated by the
//! element that writes them, so a network that reads a mode twice or writes
//! over a live mode is rejected as miswired.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexAmp = Complex64;

/// H and V amplitudes of one spatial mode, in units of √photons.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolAmplitude {
    pub h: ComplexAmp,
    pub v: ComplexAmp,
}

impl PolAmplitude {
    pub const VACUUM: PolAmplitude = PolAmplitude {
        h: Complex64::new(0.0, 0.0),
        v: Complex64::new(0.0, 0.0),
    };

    pub fn new(h: ComplexAmp, v: ComplexAmp) -> Self {
        Self { h, v }
    }

    pub fn energy(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    pub fn scale(&self, k: ComplexAmp) -> Self {
        Self::new(self.h * k, self.v * k)
    }

    fn is_finite(&self) -> bool {
        self.h.is_finite() && self.v.is_finite()
    }
}

impl std::ops::Add for PolAmplitude {
    type Output = PolAmplitude;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.h + rhs.h, self.v + rhs.v)
    }
}

/// Spatial-mode labels of the receiver, including the four detector ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "c")]
    C,
    #[serde(rename = "d")]
    D,
    #[serde(rename = "e")]
    E,
    #[serde(rename = "f")]
    F,
    #[serde(rename = "g")]
    G,
    #[serde(rename = "k")]
    K,
    D1,
    D2,
    D3,
    D4,
}

impl Mode {
    pub const COUNT: usize = 12;
    pub const DETECTOR_PORTS: [Mode; 4] = [Mode::D1, Mode::D2, Mode::D3, Mode::D4];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::A => "a",
            Mode::B => "b",
            Mode::C => "c",
            Mode::D => "d",
            Mode::E => "e",
            Mode::F => "f",
            Mode::G => "g",
            Mode::K => "k",
            Mode::D1 => "D1",
            Mode::D2 => "D2",
            Mode::D3 => "D3",
            Mode::D4 => "D4",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Amplitudes of every currently populated spatial mode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpticalState {
    modes: [Option<PolAmplitude>; Mode::COUNT],
}

impl OpticalState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builder-style insert; vacuum inputs should be inserted explicitly.
    pub fn with(mut self, mode: Mode, amp: PolAmplitude) -> Result<Self> {
        self.put(mode, amp)?;
        Ok(self)
    }

    pub fn get(&self, mode: Mode) -> Option<&PolAmplitude> {
        self.modes[mode.slot()].as_ref()
    }

    pub fn is_populated(&self, mode: Mode) -> bool {
        self.modes[mode.slot()].is_some()
    }

    pub fn populated(&self) -> impl Iterator<Item = (Mode, &PolAmplitude)> + '_ {
        ALL_MODES
            .iter()
            .filter_map(move |&m| self.get(m).map(|a| (m, a)))
    }

    pub fn total_energy(&self) -> f64 {
        self.populated().map(|(_, a)| a.energy()).sum()
    }

    fn take(&mut self, mode: Mode) -> Result<PolAmplitude> {
        self.modes[mode.slot()]
            .take()
            .ok_or_else(|| Error::Config(format!("mode {mode} is not populated")))
    }

    fn put(&mut self, mode: Mode, amp: PolAmplitude) -> Result<()> {
        if !amp.is_finite() {
            return Err(Error::Validation(format!("non-finite amplitude in mode {mode}")));
        }
        let slot = &mut self.modes[mode.slot()];
        if slot.is_some() {
            return Err(Error::Config(format!("mode {mode} is already populated")));
        }
        *slot = Some(amp);
        Ok(())
    }
}

const ALL_MODES: [Mode; Mode::COUNT] = [
    Mode::A,
    Mode::B,
    Mode::C,
    Mode::D,
    Mode::E,
    Mode::F,
    Mode::G,
    Mode::K,
    Mode::D1,
    Mode::D2,
    Mode::D3,
    Mode::D4,
];

/// Lossless beamsplitter with power transmittance `t` from each input to the
/// output of the same index:
///
/// ```text
/// out₁ =  √t·in₁ + √(1−t)·in₂
/// out₂ = √(1−t)·in₁ − √t·in₂
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplitter {
    t: f64,
    inputs: (Mode, Mode),
    outputs: (Mode, Mode),
}

impl BeamSplitter {
    pub fn new(t: f64, inputs: (Mode, Mode), outputs: (Mode, Mode)) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Validation(format!(
                "beamsplitter transmittance {t} outside (0, 1)"
            )));
        }
        distinct(inputs)?;
        distinct(outputs)?;
        Ok(Self { t, inputs, outputs })
    }

    pub fn transmittance(&self) -> f64 {
        self.t
    }
}

fn distinct(pair: (Mode, Mode)) -> Result<()> {
    if pair.0 == pair.1 {
        return Err(Error::Config(format!("mode {} used twice by one element", pair.0)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    BeamSplitter(BeamSplitter),
    /// Multiplies both polarizations by `e^{iφ}`.
    PhaseModulator { phase: f64, input: Mode, output: Mode },
    /// Half-wave plate oriented to swap H and V.
    HalfWavePlate { input: Mode, output: Mode },
    /// Reflects H into `h_out`, transmits V into `v_out`.
    PolarizingBeamSplitter { input: Mode, h_out: Mode, v_out: Mode },
}

impl Element {
    pub fn phase_modulator(phase: f64, input: Mode, output: Mode) -> Result<Self> {
        if !phase.is_finite() {
            return Err(Error::Validation(format!("phase {phase} is not finite")));
        }
        Ok(Element::PhaseModulator { phase, input, output })
    }

    pub fn pbs(input: Mode, h_out: Mode, v_out: Mode) -> Result<Self> {
        distinct((h_out, v_out))?;
        Ok(Element::PolarizingBeamSplitter { input, h_out, v_out })
    }

    pub fn apply(&self, state: &OpticalState) -> Result<OpticalState> {
        match self {
            Element::BeamSplitter(bs) => apply_beamsplitter(state, bs),
            Element::PhaseModulator { .. } => apply_phase_modulator(state, self),
            Element::HalfWavePlate { .. } => apply_hwp(state, self),
            Element::PolarizingBeamSplitter { .. } => apply_pbs(state, self),
        }
    }
}

pub fn apply_beamsplitter(state: &OpticalState, bs: &BeamSplitter) -> Result<OpticalState> {
    let mut next = state.clone();
    let in1 = next.take(bs.inputs.0)?;
    let in2 = next.take(bs.inputs.1)?;
    let r = bs.t.sqrt();
    let s = (1.0 - bs.t).sqrt();
    let out1 = in1.scale(r.into()) + in2.scale(s.into());
    let out2 = in1.scale(s.into()) + in2.scale((-r).into());
    next.put(bs.outputs.0, out1)?;
    next.put(bs.outputs.1, out2)?;
    Ok(next)
}

pub fn apply_phase_modulator(state: &OpticalState, el: &Element) -> Result<OpticalState> {
    let Element::PhaseModulator { phase, input, output } = *el else {
        return Err(Error::Contract("element is not a phase modulator".into()));
    };
    let mut next = state.clone();
    let amp = next.take(input)?;
    next.put(output, amp.scale(Complex64::from_polar(1.0, phase)))?;
    Ok(next)
}

pub fn apply_hwp(state: &OpticalState, el: &Element) -> Result<OpticalState> {
    let Element::HalfWavePlate { input, output } = *el else {
        return Err(Error::Contract("element is not a half-wave plate".into()));
    };
    let mut next = state.clone();
    let amp = next.take(input)?;
    next.put(output, PolAmplitude::new(amp.v, amp.h))?;
    Ok(next)
}

pub fn apply_pbs(state: &OpticalState, el: &Element) -> Result<OpticalState> {
    let Element::PolarizingBeamSplitter { input, h_out, v_out } = *el else {
        return Err(Error::Contract("element is not a polarizing beamsplitter".into()));
    };
    let mut next = state.clone();
    let amp = next.take(input)?;
    let zero = Complex64::new(0.0, 0.0);
    next.put(h_out, PolAmplitude::new(amp.h, zero))?;
    next.put(v_out, PolAmplitude::new(zero, amp.v))?;
    Ok(next)
}

/// Applies `network` in order.
pub fn propagate(network: &[Element], input: &OpticalState) -> Result<OpticalState> {
    network
        .iter()
        .try_fold(input.clone(), |state, el| el.apply(&state))
}

/// Mean photon number reaching each detector port D1..D4.
pub fn energies(state: &OpticalState) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (slot, port) in out.iter_mut().zip(Mode::DETECTOR_PORTS) {
        *slot = state
            .get(port)
            .ok_or_else(|| Error::Contract(format!("detector port {port} is not populated")))?
            .energy();
    }
    Ok(out)
}

/// Born-rule click probabilities for a single photon with the given port amplitudes.
pub fn single_photon_probabilities(amps: &[ComplexAmp; 4]) -> Result<[f64; 4]> {
    let weights = amps.map(|a| a.norm_sqr());
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Degenerate("all port amplitudes are zero".into()));
    }
    // Destructive interference leaves rounding residue of order ε² where the
    // exact probability is zero; flush it so impossible outcomes stay impossible.
    Ok(weights.map(|w| if w < total * RESIDUE_FLOOR { 0.0 } else { w / total }))
}

const RESIDUE_FLOOR: f64 = 1e-24;

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use proptest::prelude::*;

    use super::*;

    fn c(re: f64, im: f64) -> ComplexAmp {
        Complex64::new(re, im)
    }

    fn pol(h: ComplexAmp, v: ComplexAmp) -> PolAmplitude {
        PolAmplitude::new(h, v)
    }

    fn two_inputs(a: PolAmplitude, b: PolAmplitude) -> OpticalState {
        OpticalState::new().with(Mode::A, a).unwrap().with(Mode::B, b).unwrap()
    }

    fn close(x: ComplexAmp, y: ComplexAmp) -> bool {
        (x - y).norm() < 1e-12
    }

    #[test]
    fn balanced_splitter_halves_input() {
        let mu: f64 = 1.7;
        let p = pol(c(0.6, 0.0), c(0.0, 0.8));
        let bs = BeamSplitter::new(0.5, (Mode::A, Mode::B), (Mode::C, Mode::D)).unwrap();
        let input = two_inputs(p.scale((2.0 * mu).sqrt().into()), PolAmplitude::VACUUM);
        let out = apply_beamsplitter(&input, &bs).unwrap();
        let expect = p.scale(mu.sqrt().into());
        for m in [Mode::C, Mode::D] {
            let got = out.get(m).unwrap();
            assert!(close(got.h, expect.h) && close(got.v, expect.v));
        }
        assert!(!out.is_populated(Mode::A));
    }

    #[test]
    fn balanced_splitter_interferes() {
        let x = pol(c(0.3, -0.2), c(1.1, 0.4));
        let bs = BeamSplitter::new(0.5, (Mode::A, Mode::B), (Mode::C, Mode::D)).unwrap();
        let out = apply_beamsplitter(&two_inputs(x, x), &bs).unwrap();
        let c_amp = out.get(Mode::C).unwrap();
        assert!(close(c_amp.h, x.h * 2f64.sqrt()) && close(c_amp.v, x.v * 2f64.sqrt()));
        assert!(out.get(Mode::D).unwrap().energy() < 1e-24);
    }

    #[test]
    fn unbalanced_splitter_ratio() {
        let bs = BeamSplitter::new(0.44, (Mode::A, Mode::B), (Mode::C, Mode::D)).unwrap();
        let input = two_inputs(pol(c(1.0, 0.0), c(0.0, 0.0)), PolAmplitude::VACUUM);
        let out = apply_beamsplitter(&input, &bs).unwrap();
        assert!((out.get(Mode::C).unwrap().energy() - 0.44).abs() < 1e-12);
        assert!((out.get(Mode::D).unwrap().energy() - 0.56).abs() < 1e-12);
        assert!(close(out.get(Mode::C).unwrap().h, c(0.44f64.sqrt(), 0.0)));
        assert!(close(out.get(Mode::D).unwrap().h, c(0.56f64.sqrt(), 0.0)));
    }

    #[test]
    fn splitter_validation() {
        for t in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            let err = BeamSplitter::new(t, (Mode::A, Mode::B), (Mode::C, Mode::D)).unwrap_err();
            assert_eq!(err.kind(), "validation");
        }
        let bs = BeamSplitter::new(0.5, (Mode::A, Mode::B), (Mode::C, Mode::D)).unwrap();
        let only_a = OpticalState::new().with(Mode::A, PolAmplitude::VACUUM).unwrap();
        assert_eq!(apply_beamsplitter(&only_a, &bs).unwrap_err().kind(), "config");
    }

    #[test]
    fn phase_modulator_examples() {
        let one = pol(c(1.0, 0.0), c(0.0, 0.0));
        let start = OpticalState::new().with(Mode::C, one).unwrap();
        let zero = Element::phase_modulator(0.0, Mode::C, Mode::E).unwrap();
        assert_eq!(zero.apply(&start).unwrap().get(Mode::E), Some(&one));

        let flip = Element::phase_modulator(PI, Mode::C, Mode::E).unwrap();
        assert!(close(flip.apply(&start).unwrap().get(Mode::E).unwrap().h, c(-1.0, 0.0)));

        let quarter_a = Element::phase_modulator(FRAC_PI_2, Mode::C, Mode::D).unwrap();
        let quarter_b = Element::phase_modulator(FRAC_PI_2, Mode::D, Mode::E).unwrap();
        let twice = propagate(&[quarter_a, quarter_b], &start).unwrap();
        let once = flip.apply(&start).unwrap();
        assert!(close(twice.get(Mode::E).unwrap().h, once.get(Mode::E).unwrap().h));

        let missing = Element::phase_modulator(0.1, Mode::G, Mode::E).unwrap();
        assert_eq!(missing.apply(&start).unwrap_err().kind(), "config");
    }

    #[test]
    fn half_wave_plate_examples() {
        let hwp = Element::HalfWavePlate { input: Mode::D, output: Mode::F };
        let back = Element::HalfWavePlate { input: Mode::F, output: Mode::D };
        let h_only = OpticalState::new().with(Mode::D, pol(c(1.0, 0.0), c(0.0, 0.0))).unwrap();
        let out = hwp.apply(&h_only).unwrap();
        assert_eq!(out.get(Mode::F), Some(&pol(c(0.0, 0.0), c(1.0, 0.0))));

        let arbitrary = OpticalState::new().with(Mode::D, pol(c(0.2, 0.7), c(-0.4, 0.1))).unwrap();
        assert_eq!(propagate(&[hwp, back], &arbitrary).unwrap(), arbitrary);

        let x = c(0.3, 0.3);
        let sym = OpticalState::new().with(Mode::D, pol(x, x)).unwrap();
        assert_eq!(hwp.apply(&sym).unwrap().get(Mode::F), Some(&pol(x, x)));
    }

    #[test]
    fn pbs_examples() {
        let pbs = Element::pbs(Mode::G, Mode::D3, Mode::D4).unwrap();
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        let both = OpticalState::new().with(Mode::G, pol(one, one)).unwrap();
        let out = pbs.apply(&both).unwrap();
        assert_eq!(out.get(Mode::D3), Some(&pol(one, zero)));
        assert_eq!(out.get(Mode::D4), Some(&pol(zero, one)));

        let x = c(0.0, 0.5);
        let v_only = OpticalState::new().with(Mode::G, pol(zero, x)).unwrap();
        let out = pbs.apply(&v_only).unwrap();
        assert_eq!(out.get(Mode::D3), Some(&pol(zero, zero)));
        assert_eq!(out.get(Mode::D4), Some(&pol(zero, x)));
    }

    #[test]
    fn empty_network_is_identity() {
        let s = two_inputs(pol(c(1.0, 2.0), c(3.0, 4.0)), PolAmplitude::VACUUM);
        assert_eq!(propagate(&[], &s).unwrap(), s);
    }

    #[test]
    fn writing_a_live_mode_is_rejected() {
        let s = two_inputs(PolAmplitude::VACUUM, PolAmplitude::VACUUM);
        let hwp = Element::HalfWavePlate { input: Mode::A, output: Mode::B };
        assert_eq!(hwp.apply(&s).unwrap_err().kind(), "config");
    }

    #[test]
    fn energies_requires_detector_ports() {
        let s = two_inputs(PolAmplitude::VACUUM, PolAmplitude::VACUUM);
        assert_eq!(energies(&s).unwrap_err().kind(), "contract");
    }

    #[test]
    fn single_photon_normalization() {
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        assert_eq!(single_photon_probabilities(&[one, one, zero, zero]).unwrap(), [0.5, 0.5, 0.0, 0.0]);
        assert_eq!(single_photon_probabilities(&[one, zero, zero, zero]).unwrap(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(single_photon_probabilities(&[zero; 4]).unwrap_err().kind(), "degenerate");
    }

    fn amp() -> impl Strategy<Value = ComplexAmp> {
        (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(re, im)| c(re, im))
    }

    fn pol_amp() -> impl Strategy<Value = PolAmplitude> {
        (amp(), amp()).prop_map(|(h, v)| pol(h, v))
    }

    fn assert_conserved(before: &OpticalState, after: &OpticalState) {
        let (e0, e1) = (before.total_energy(), after.total_energy());
        assert!((e0 - e1).abs() <= 1e-12 * e0.max(1.0), "{e0} vs {e1}");
    }

    proptest! {
        #[test]
        fn every_element_conserves_energy(
            a in pol_amp(), b in pol_amp(), t in 0.001f64..0.999, phase in -10.0f64..10.0,
        ) {
            let s = two_inputs(a, b);
            let elements = [
                Element::BeamSplitter(BeamSplitter::new(t, (Mode::A, Mode::B), (Mode::C, Mode::D)).unwrap()),
                Element::phase_modulator(phase, Mode::A, Mode::E).unwrap(),
                Element::HalfWavePlate { input: Mode::B, output: Mode::F },
                Element::pbs(Mode::A, Mode::G, Mode::K).unwrap(),
            ];
            for el in elements {
                assert_conserved(&s, &el.apply(&s).unwrap());
            }
        }

        #[test]
        fn single_photon_probabilities_sum_to_one(
            a in amp(), b in amp(), c2 in amp(), d in amp(),
        ) {
            prop_assume!(a.norm() + b.norm() + c2.norm() + d.norm() > 1e-6);
            let p = single_photon_probabilities(&[a, b, c2, d]).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
