//! Intercept-resend attacks on the receiver.
//!
//! In every strategy Eve measures Alice's state in a random BB84 basis and
//! resends a bright coherent pulse in the polarization she found. Bob's
//! detectors are blinded, so only pulses above their trigger threshold click.
//! The strategies differ in how Eve keeps two detectors from firing together
//! when her basis matches Bob's:
//!
//! * `SingleDetectorBlinding`: Bob runs one detector; no pairs to worry about.
//! * `AsymmetricThreshold`: a blinding power and trigger energy at which one
//!   detector of each pair is above threshold and the other below.
//! * `TimeShift`: an arrival time inside one detector's response window only.
//! * `PhaseDeviation`: exploits a systematic offset of Bob's modulator.
//! * `WavelengthBs`: picks a wavelength where Bob's splitters are unbalanced.
//!
//! [`AttackPlan`] resolves a strategy against a concrete receiver and detector
//! set, checks its feasibility, and tabulates click probabilities for all 16
//! combinations of Eve's and Bob's phases.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{deserialize_angle, Basis, Bb84Phase};
use crate::detectors::{
    blinded_click_probability, temporal_click_probability, threshold_click, DetectorId,
    DetectorResponseCurve, ThresholdDetector, TriggerPulse,
};
use crate::error::{Error, Result};
use crate::receiver::{self, bell_outcome, BellOutcome, ReceiverConfig};
use crate::sifting::sift_and_key;

/// Eve's measurement of Alice's BB84 state `theta_a` (radians).
pub fn eve_measure<R: Rng + ?Sized>(theta_a: f64, basis: Basis, rng: &mut R) -> Result<Bb84Phase> {
    Ok(measure_phase(Bb84Phase::from_radians(theta_a)?, basis, rng))
}

pub fn measure_phase<R: Rng + ?Sized>(theta: Bb84Phase, basis: Basis, rng: &mut R) -> Bb84Phase {
    if theta.basis() == basis {
        theta
    } else {
        basis.phases()[usize::from(rng.gen::<bool>())]
    }
}

/// Outcome distribution of [`measure_phase`].
pub fn measurement_distribution(theta: Bb84Phase, basis: Basis) -> Vec<(Bb84Phase, f64)> {
    if theta.basis() == basis {
        vec![(theta, 1.0)]
    } else {
        basis.phases().iter().map(|&p| (p, 0.5)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Blinding power.
    pub p_b_mw: f64,
    /// Trigger energy reaching a detector that receives the full pulse share.
    pub e_t_pj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSchedule<T> {
    pub z: T,
    pub x: T,
}

impl<T: Copy> BasisSchedule<T> {
    pub fn uniform(v: T) -> Self {
        Self { z: v, x: v }
    }

    pub fn get(&self, basis: Basis) -> T {
        match basis {
            Basis::Z => self.z,
            Basis::X => self.x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EveStrategy {
    SingleDetectorBlinding {
        mu: f64,
        mu_th: f64,
    },
    /// Per-basis operating points; resolved from the detector curves when absent.
    AsymmetricThreshold {
        #[serde(default)]
        schedule: Option<BasisSchedule<OperatingPoint>>,
    },
    /// Blinding point and per-basis arrival times; resolved when absent.
    TimeShift {
        #[serde(default)]
        blinding: Option<OperatingPoint>,
        #[serde(default)]
        arrival_ns: Option<BasisSchedule<f64>>,
    },
    PhaseDeviation {
        #[serde(deserialize_with = "deserialize_angle")]
        delta_phi_e: f64,
        mu: f64,
        mu_th: f64,
    },
    WavelengthBs {
        gamma: f64,
        t1: f64,
        t2: f64,
        mu: f64,
        mu_th: f64,
    },
}

impl EveStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            EveStrategy::SingleDetectorBlinding { .. } => "single_detector_blinding",
            EveStrategy::AsymmetricThreshold { .. } => "asymmetric_threshold",
            EveStrategy::TimeShift { .. } => "time_shift",
            EveStrategy::PhaseDeviation { .. } => "phase_deviation",
            EveStrategy::WavelengthBs { .. } => "wavelength_bs",
        }
    }

    fn threshold(&self) -> Option<f64> {
        match *self {
            EveStrategy::SingleDetectorBlinding { mu_th, .. }
            | EveStrategy::PhaseDeviation { mu_th, .. }
            | EveStrategy::WavelengthBs { mu_th, .. } => Some(mu_th),
            _ => None,
        }
    }
}

/// The pulse Eve sends Bob after measuring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvePulse {
    /// Half the pulse's mean photon number; a detector on the constructive
    /// side of a matched-basis slot receives `mu`.
    pub mu: f64,
    pub phi_e: f64,
    /// H-power fraction of the pulse polarization.
    pub gamma: f64,
    /// Splitting ratios of Bob's two splitters at Eve's wavelength; `None`
    /// means the receiver's nominal values.
    pub splitting: Option<(f64, f64)>,
    /// `None` means the nominal gate time, inside every response window.
    pub arrival_time_ns: Option<f64>,
    pub blinding: Option<OperatingPoint>,
}

impl EvePulse {
    pub fn total_mean_photons(&self) -> f64 {
        2.0 * self.mu
    }
}

/// Receiver and detectors the attack runs against.
#[derive(Debug, Clone)]
pub struct AttackContext {
    pub receiver: ReceiverConfig,
    pub curves: Vec<DetectorResponseCurve>,
    /// Converts mean photon number to trigger energy.
    pub pj_per_photon: f64,
}

impl AttackContext {
    pub fn new(receiver: ReceiverConfig, curves: Vec<DetectorResponseCurve>, pj_per_photon: f64) -> Self {
        Self { receiver, curves, pj_per_photon }
    }

    pub fn curve(&self, id: DetectorId) -> Result<&DetectorResponseCurve> {
        self.curves
            .iter()
            .find(|c| c.id() == id)
            .ok_or_else(|| Error::Config(format!("no response curve loaded for {id}")))
    }

    fn mu_for_energy(&self, e_t_pj: f64) -> Result<f64> {
        if !(self.pj_per_photon > 0.0) {
            return Err(Error::Validation("pj_per_photon must be > 0".into()));
        }
        Ok(e_t_pj / self.pj_per_photon)
    }
}

fn unresolved(what: &str) -> Error {
    Error::Contract(format!("{what} not resolved; build an AttackPlan first"))
}

/// Builds Eve's pulse for her measured phase. Strategies with `None`
/// parameters must be resolved first (see [`AttackPlan::new`]).
pub fn forge_pulse(strategy: &EveStrategy, phi_e: Bb84Phase, ctx: &AttackContext) -> Result<EvePulse> {
    let base = EvePulse {
        mu: 0.0,
        phi_e: phi_e.radians(),
        gamma: 0.5,
        splitting: None,
        arrival_time_ns: None,
        blinding: None,
    };
    let pulse = match *strategy {
        EveStrategy::SingleDetectorBlinding { mu, .. } => EvePulse { mu, ..base },
        EveStrategy::PhaseDeviation { delta_phi_e, mu, .. } => EvePulse {
            mu,
            phi_e: phi_e.radians() + delta_phi_e,
            ..base
        },
        EveStrategy::WavelengthBs { gamma, t1, t2, mu, .. } => EvePulse {
            mu,
            gamma,
            splitting: Some((t1, t2)),
            ..base
        },
        EveStrategy::AsymmetricThreshold { schedule } => {
            let point = schedule.ok_or_else(|| unresolved("operating-point schedule"))?.get(phi_e.basis());
            EvePulse {
                mu: ctx.mu_for_energy(point.e_t_pj)?,
                blinding: Some(point),
                ..base
            }
        }
        EveStrategy::TimeShift { blinding, arrival_ns } => {
            let point = blinding.ok_or_else(|| unresolved("blinding point"))?;
            let times = arrival_ns.ok_or_else(|| unresolved("arrival times"))?;
            EvePulse {
                mu: ctx.mu_for_energy(point.e_t_pj)?,
                blinding: Some(point),
                arrival_time_ns: Some(times.get(phi_e.basis())),
                ..base
            }
        }
    };
    if !(pulse.mu >= 0.0) || !pulse.mu.is_finite() {
        return Err(Error::Validation(format!("pulse mean photon number {} must be >= 0", pulse.mu)));
    }
    Ok(pulse)
}

/// Mean photon numbers reaching D1..D4 for Bob's nominal phase `phi_b`.
pub fn pulse_energies(ctx: &AttackContext, pulse: &EvePulse, phi_b: Bb84Phase) -> Result<[f64; 4]> {
    let cfg = match pulse.splitting {
        Some((t1, t2)) => ctx.receiver.with_splitting(t1, t2),
        None => ctx.receiver.clone(),
    };
    receiver::detector_energies(&cfg, phi_b.radians(), pulse.mu, pulse.phi_e, pulse.gamma)
}

/// Per-detector click probabilities of Bob's blinded detectors; inactive
/// detectors never click.
pub fn click_probabilities(
    ctx: &AttackContext,
    strategy: &EveStrategy,
    pulse: &EvePulse,
    energies: &[f64; 4],
) -> Result<[f64; 4]> {
    let mut probs = [0.0; 4];
    for id in DetectorId::ALL {
        let i = id.index();
        if !ctx.receiver.active_detectors[i] {
            continue;
        }
        probs[i] = if let Some(mu_th) = strategy.threshold() {
            let det = ThresholdDetector::new(mu_th)?;
            if threshold_click(energies[i], &det) { 1.0 } else { 0.0 }
        } else {
            let point = pulse.blinding.ok_or_else(|| unresolved("blinding point"))?;
            let curve = ctx.curve(id)?;
            let energy_pj = energies[i] * ctx.pj_per_photon;
            match pulse.arrival_time_ns {
                Some(t) => temporal_click_probability(
                    curve,
                    &TriggerPulse { energy_pj, arrival_time_ns: t },
                    point.p_b_mw,
                )?,
                None => blinded_click_probability(curve, point.p_b_mw, energy_pj)?,
            }
        };
    }
    Ok(probs)
}

/// Detector energies of the balanced receiver written directly as cosines.
pub fn phase_deviation_energies(mu: f64, phi_e: f64, phi_b: f64) -> [f64; 4] {
    let diff = (phi_e - phi_b).cos();
    let sum = (phi_e + phi_b).cos();
    let h = mu / 2.0;
    [h * (1.0 + diff), h * (1.0 + sum), h * (1.0 - diff), h * (1.0 - sum)]
}

/// Thresholds `μ_th` with `e_low < μ_th ≤ e_high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuWindow {
    pub low_exclusive: f64,
    pub high_inclusive: f64,
}

impl MuWindow {
    pub fn contains(&self, mu_th: f64) -> bool {
        mu_th > self.low_exclusive && mu_th <= self.high_inclusive
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low_exclusive + self.high_inclusive)
    }
}

pub fn feasible_mu_window(e_high: f64, e_low: f64) -> Option<MuWindow> {
    (e_high > e_low).then_some(MuWindow {
        low_exclusive: e_low,
        high_inclusive: e_high,
    })
}

/// Pairs of detectors that share the full pulse energy when Eve's and Bob's
/// bases agree, one pair per Bob phase of `basis`. Derived from the balanced
/// receiver rather than tabulated.
pub fn matched_pairs(basis: Basis) -> Vec<(DetectorId, DetectorId)> {
    let eve = basis.phases()[0];
    basis
        .phases()
        .iter()
        .map(|bob| {
            let e = phase_deviation_energies(1.0, eve.radians(), bob.radians());
            let lit: Vec<_> = DetectorId::ALL.into_iter().filter(|d| e[d.index()] > 0.75).collect();
            (lit[0], lit[1])
        })
        .collect()
}

/// "Detector `click` fires, detector `silent` does not."
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairConstraint {
    pub click: DetectorId,
    pub silent: DetectorId,
}

impl FromStr for PairConstraint {
    type Err = Error;

    /// Parses `D1>D2`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('>')
            .ok_or_else(|| Error::Validation(format!("constraint '{s}' is not of the form D1>D2")))?;
        let c = PairConstraint { click: a.parse()?, silent: b.parse()? };
        if c.click == c.silent {
            return Err(Error::Validation(format!("constraint '{s}' names one detector twice")));
        }
        Ok(c)
    }
}

pub fn parse_constraints(s: &str) -> Result<Vec<PairConstraint>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub p_step_mw: f64,
    pub e_step_pj: f64,
    /// Also require every constrained detector to stay silent at half the
    /// trigger energy (the basis-mismatch energy).
    pub half_energy_silent: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            p_step_mw: 0.01,
            e_step_pj: 0.001,
            half_energy_silent: false,
        }
    }
}

#[derive(Debug, Default)]
struct Requirements {
    click: Vec<DetectorId>,
    silent: Vec<DetectorId>,
    half_silent: Vec<DetectorId>,
}

/// Grid search for a blinding power and trigger energy meeting every
/// constraint. Among feasible grid points the one with the widest energy
/// margin to the nearest threshold is returned.
pub fn select_operating_point(
    curves: &[DetectorResponseCurve],
    constraints: &[PairConstraint],
    opts: &SearchOptions,
) -> Option<OperatingPoint> {
    let mut req = Requirements::default();
    for c in constraints {
        req.click.push(c.click);
        req.silent.push(c.silent);
    }
    if opts.half_energy_silent {
        req.half_silent = req.click.iter().chain(&req.silent).copied().collect();
    }
    search_point(curves, &req, opts)
}

fn search_point(curves: &[DetectorResponseCurve], req: &Requirements, opts: &SearchOptions) -> Option<OperatingPoint> {
    let find = |id: DetectorId| curves.iter().find(|c| c.id() == id);
    let mut ids: Vec<DetectorId> = req.click.iter().chain(&req.silent).chain(&req.half_silent).copied().collect();
    ids.sort();
    ids.dedup();
    if ids.is_empty() || req.click.iter().any(|c| req.silent.contains(c)) {
        return None;
    }
    let involved: Vec<&DetectorResponseCurve> = ids.iter().map(|&id| find(id)).collect::<Option<_>>()?;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for c in &involved {
        let (a, b) = c.domain()?;
        lo = lo.max(a);
        hi = hi.min(b);
    }
    if lo > hi || !(opts.p_step_mw > 0.0) || !(opts.e_step_pj > 0.0) {
        return None;
    }
    let e_max = involved
        .iter()
        .flat_map(|c| c.always().points().iter().map(|p| p.1))
        .fold(0.0, f64::max);
    let n_p = ((hi - lo) / opts.p_step_mw + 1e-9).floor() as usize;
    let n_e = (e_max / opts.e_step_pj + 1e-9).floor() as usize;

    let mut best: Option<(f64, OperatingPoint)> = None;
    for i in 0..=n_p {
        let p = (lo + i as f64 * opts.p_step_mw).min(hi);
        let a = |id| find(id).unwrap().e_always(p).unwrap();
        let n = |id| find(id).unwrap().e_never(p).unwrap();
        for j in 1..=n_e {
            let e = j as f64 * opts.e_step_pj;
            let margin = req
                .click
                .iter()
                .map(|&id| e - a(id))
                .chain(req.silent.iter().map(|&id| n(id) - e))
                .chain(req.half_silent.iter().map(|&id| n(id) - e / 2.0))
                .fold(f64::INFINITY, f64::min);
            if margin < 0.0 || best.is_some_and(|(m, _)| margin <= m) {
                continue;
            }
            let point = OperatingPoint { p_b_mw: p, e_t_pj: e };
            if point_satisfies(curves, req, &point) {
                best = Some((margin, point));
            }
        }
    }
    best.map(|(_, p)| p)
}

fn point_satisfies(curves: &[DetectorResponseCurve], req: &Requirements, pt: &OperatingPoint) -> bool {
    let prob = |id: DetectorId, e: f64| {
        curves
            .iter()
            .find(|c| c.id() == id)
            .and_then(|c| blinded_click_probability(c, pt.p_b_mw, e).ok())
    };
    req.click.iter().all(|&id| prob(id, pt.e_t_pj) == Some(1.0))
        && req.silent.iter().all(|&id| prob(id, pt.e_t_pj) == Some(0.0))
        && req.half_silent.iter().all(|&id| prob(id, pt.e_t_pj / 2.0) == Some(0.0))
}

/// Re-evaluates `constraints` at `point` through the click-probability model.
pub fn verify_operating_point(
    curves: &[DetectorResponseCurve],
    constraints: &[PairConstraint],
    point: &OperatingPoint,
) -> Vec<(PairConstraint, f64, f64)> {
    let prob = |id: DetectorId| {
        curves
            .iter()
            .find(|c| c.id() == id)
            .and_then(|c| blinded_click_probability(c, point.p_b_mw, point.e_t_pj).ok())
            .unwrap_or(f64::NAN)
    };
    constraints.iter().map(|&c| (c, prob(c.click), prob(c.silent))).collect()
}

/// Target assignments for a list of pairs (one detector from each), in
/// lexicographic order of the chosen detectors.
fn target_assignments(pairs: &[(DetectorId, DetectorId)]) -> Vec<Vec<PairConstraint>> {
    let mut out: Vec<Vec<PairConstraint>> = (0..1usize << pairs.len())
        .map(|mask| {
            pairs
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| {
                    if mask >> k & 1 == 0 {
                        PairConstraint { click: a.min(b), silent: a.max(b) }
                    } else {
                        PairConstraint { click: a.max(b), silent: a.min(b) }
                    }
                })
                .collect()
        })
        .collect();
    out.sort_by_key(|cs| cs.iter().map(|c| c.click).collect::<Vec<_>>());
    out
}

fn first_feasible_point(
    curves: &[DetectorResponseCurve],
    pairs: &[(DetectorId, DetectorId)],
) -> Option<OperatingPoint> {
    let opts = SearchOptions { half_energy_silent: true, ..Default::default() };
    let mut half: Vec<DetectorId> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    half.sort();
    half.dedup();
    target_assignments(pairs).into_iter().find_map(|cs| {
        let mut req = Requirements {
            click: cs.iter().map(|c| c.click).collect(),
            silent: cs.iter().map(|c| c.silent).collect(),
            half_silent: half.clone(),
        };
        req.click.dedup();
        search_point(curves, &req, &opts)
    })
}

/// Operating points for the asymmetric-threshold attack: a single static
/// point when one exists for all matched pairs of both bases, otherwise one
/// point per basis.
pub fn plan_asymmetric_schedule(curves: &[DetectorResponseCurve]) -> Option<BasisSchedule<OperatingPoint>> {
    let mut all = matched_pairs(Basis::Z);
    all.extend(matched_pairs(Basis::X));
    if let Some(p) = first_feasible_point(curves, &all) {
        return Some(BasisSchedule::uniform(p));
    }
    Some(BasisSchedule {
        z: first_feasible_point(curves, &matched_pairs(Basis::Z))?,
        x: first_feasible_point(curves, &matched_pairs(Basis::X))?,
    })
}

/// An arrival time at which exactly one detector of every pair responds.
/// Target combinations are tried in lexicographic order; the time returned
/// is the midpoint of the first qualifying segment.
pub fn select_arrival_time(
    curves: &[DetectorResponseCurve],
    pairs: &[(DetectorId, DetectorId)],
) -> Option<(f64, Vec<DetectorId>)> {
    let window = |id: DetectorId| curves.iter().find(|c| c.id() == id).map(|c| c.window());
    for cs in target_assignments(pairs) {
        let targets: Vec<_> = cs.iter().map(|c| window(c.click)).collect::<Option<_>>()?;
        let others: Vec<_> = cs.iter().map(|c| window(c.silent)).collect::<Option<_>>()?;
        let mut edges: Vec<f64> = targets
            .iter()
            .chain(&others)
            .flat_map(|w| [w.start_ns, w.end_ns])
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        for seg in edges.windows(2) {
            let t = 0.5 * (seg[0] + seg[1]);
            if targets.iter().all(|w| w.contains(t)) && !others.iter().any(|w| w.contains(t)) {
                return Some((t, cs.iter().map(|c| c.click).collect()));
            }
        }
    }
    None
}

/// Result of checking an attack over all 16 phase combinations.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AttackAudit {
    /// Every basis-matched combination yields exactly one certain click.
    pub matched_single: bool,
    /// No basis-mismatched combination can click.
    pub mismatched_silent: bool,
    /// Every forced click keys the same bit for Alice and Bob when Alice's
    /// phase equals Eve's.
    pub error_free: bool,
    pub failures: Vec<String>,
}

impl AttackAudit {
    pub fn passed(&self) -> bool {
        self.matched_single && self.mismatched_silent && self.error_free
    }
}

type PhaseTable<T> = [[T; 4]; 4];

/// A strategy resolved against a receiver, with its click table.
#[derive(Debug, Clone)]
pub struct AttackPlan {
    strategy: EveStrategy,
    ctx: AttackContext,
    pulses: [EvePulse; 4],
    energies: PhaseTable<[f64; 4]>,
    probs: PhaseTable<[f64; 4]>,
    mu_window: Option<MuWindow>,
}

impl AttackPlan {
    /// Resolves missing parameters and rejects strategies that do not meet
    /// their success condition.
    pub fn new(strategy: &EveStrategy, ctx: AttackContext) -> Result<Self> {
        ctx.receiver.validate()?;
        let strategy = resolve(strategy, &ctx)?;
        let mut pulses = [forge_pulse(&strategy, Bb84Phase::Zero, &ctx)?; 4];
        let mut energies = [[[0.0; 4]; 4]; 4];
        let mut probs = [[[0.0; 4]; 4]; 4];
        for eve in Bb84Phase::ALL {
            let pulse = forge_pulse(&strategy, eve, &ctx)?;
            pulses[eve.index()] = pulse;
            for bob in Bb84Phase::ALL {
                let e = pulse_energies(&ctx, &pulse, bob)?;
                energies[eve.index()][bob.index()] = e;
                probs[eve.index()][bob.index()] = click_probabilities(&ctx, &strategy, &pulse, &e)?;
            }
        }
        let mut plan = Self { strategy, ctx, pulses, energies, probs, mu_window: None };
        plan.check_feasible()?;
        Ok(plan)
    }

    fn check_feasible(&mut self) -> Result<()> {
        let name = self.strategy.name();
        match self.strategy {
            EveStrategy::SingleDetectorBlinding { mu, mu_th } => {
                if !(mu > 0.0) {
                    return Err(Error::Validation(format!("mu={mu} must be > 0")));
                }
                let window = feasible_mu_window(mu, mu / 2.0).unwrap();
                self.mu_window = Some(window);
                if !window.contains(mu_th) {
                    return Err(Error::Infeasible(format!(
                        "{name}: threshold {mu_th} outside ({}, {}]",
                        window.low_exclusive, window.high_inclusive
                    )));
                }
                Ok(())
            }
            EveStrategy::PhaseDeviation { mu_th, .. } | EveStrategy::WavelengthBs { mu_th, .. } => {
                let window = self.threshold_window();
                self.mu_window = window;
                match window {
                    Some(w) if w.contains(mu_th) => self.require_clean_audit(),
                    Some(w) => Err(Error::Infeasible(format!(
                        "{name}: threshold {mu_th} outside ({}, {}]",
                        w.low_exclusive, w.high_inclusive
                    ))),
                    None => Err(Error::Infeasible(format!(
                        "{name}: no threshold separates the two detectors of a matched pair"
                    ))),
                }
            }
            EveStrategy::AsymmetricThreshold { .. } | EveStrategy::TimeShift { .. } => self.require_clean_audit(),
        }
    }

    fn require_clean_audit(&self) -> Result<()> {
        let audit = self.audit();
        if audit.passed() {
            Ok(())
        } else {
            Err(Error::Infeasible(format!(
                "{}: {}",
                self.strategy.name(),
                audit.failures.join("; ")
            )))
        }
    }

    /// Threshold window over the active detectors: the weakest top energy of
    /// any matched combination must clear every second-highest matched energy
    /// and every mismatched energy.
    pub fn threshold_window(&self) -> Option<MuWindow> {
        let active = self.ctx.receiver.active_detectors;
        let (mut high, mut low) = (f64::INFINITY, 0.0f64);
        for eve in Bb84Phase::ALL {
            for bob in Bb84Phase::ALL {
                let mut e: Vec<f64> = (0..4)
                    .filter(|&i| active[i])
                    .map(|i| self.energies[eve.index()][bob.index()][i])
                    .collect();
                e.sort_by(|a, b| b.total_cmp(a));
                if eve.basis() == bob.basis() {
                    high = high.min(e[0]);
                    low = low.max(e.get(1).copied().unwrap_or(0.0));
                } else {
                    low = low.max(e[0]);
                }
            }
        }
        feasible_mu_window(high, low)
    }

    pub fn audit(&self) -> AttackAudit {
        let mut audit = AttackAudit {
            matched_single: true,
            mismatched_silent: true,
            error_free: true,
            failures: Vec::new(),
        };
        for eve in Bb84Phase::ALL {
            for bob in Bb84Phase::ALL {
                let p = self.click_probabilities(eve, bob);
                let tag = format!("phi_E={eve}, phi_B={bob}");
                if eve.basis() != bob.basis() {
                    if p.iter().any(|&x| x > 0.0) {
                        audit.mismatched_silent = false;
                        audit.failures.push(format!("{tag}: mismatched basis can click"));
                    }
                    continue;
                }
                let certain = p.iter().filter(|&&x| x == 1.0).count();
                let never = p.iter().filter(|&&x| x == 0.0).count();
                if certain != 1 || never != 3 {
                    audit.matched_single = false;
                    audit.failures.push(format!("{tag}: click probabilities {p:?}"));
                    continue;
                }
                let outcome = bell_outcome(p.map(|x| x == 1.0));
                match sift_and_key(eve, bob, outcome) {
                    Ok(Some(k)) if k.alice == k.bob => {}
                    _ => {
                        audit.error_free = false;
                        audit.failures.push(format!("{tag}: outcome {outcome} keys an error"));
                    }
                }
            }
        }
        audit
    }

    pub fn strategy(&self) -> &EveStrategy {
        &self.strategy
    }

    pub fn context(&self) -> &AttackContext {
        &self.ctx
    }

    pub fn mu_window(&self) -> Option<MuWindow> {
        self.mu_window
    }

    pub fn pulse(&self, phi_e: Bb84Phase) -> &EvePulse {
        &self.pulses[phi_e.index()]
    }

    pub fn energies(&self, phi_e: Bb84Phase, phi_b: Bb84Phase) -> [f64; 4] {
        self.energies[phi_e.index()][phi_b.index()]
    }

    pub fn click_probabilities(&self, phi_e: Bb84Phase, phi_b: Bb84Phase) -> [f64; 4] {
        self.probs[phi_e.index()][phi_b.index()]
    }

    /// Probability of a given Bell outcome with independent detectors.
    pub fn outcome_probability(&self, phi_e: Bb84Phase, phi_b: Bb84Phase, outcome: BellOutcome) -> f64 {
        pattern_probability_of(&self.click_probabilities(phi_e, phi_b), outcome)
    }

    /// Eve's guess of Bob's phase from the public basis and Bell outcome:
    /// the candidate that makes the announced outcome most likely, the
    /// bit-0 phase on ties.
    pub fn infer_bob_phase(&self, phi_e: Bb84Phase, bob_basis: Basis, outcome: BellOutcome) -> Bb84Phase {
        let [first, second] = bob_basis.phases();
        let p0 = self.outcome_probability(phi_e, first, outcome);
        let p1 = self.outcome_probability(phi_e, second, outcome);
        if p1 > p0 { second } else { first }
    }
}

fn pattern_probability_of(probs: &[f64; 4], outcome: BellOutcome) -> f64 {
    let mut total = 0.0;
    for mask in 0u8..16 {
        let clicks = [0, 1, 2, 3].map(|i| mask >> i & 1 == 1);
        if bell_outcome(clicks) != outcome {
            continue;
        }
        total += (0..4)
            .map(|i| if clicks[i] { probs[i] } else { 1.0 - probs[i] })
            .product::<f64>();
    }
    total
}

fn resolve(strategy: &EveStrategy, ctx: &AttackContext) -> Result<EveStrategy> {
    let infeasible = |msg: &str| Error::Infeasible(format!("{}: {msg}", strategy.name()));
    if strategy.threshold().is_none() {
        for id in DetectorId::ALL {
            ctx.curve(id)?;
        }
    }
    Ok(match strategy {
        EveStrategy::AsymmetricThreshold { schedule: None } => EveStrategy::AsymmetricThreshold {
            schedule: Some(
                plan_asymmetric_schedule(&ctx.curves)
                    .ok_or_else(|| infeasible("no operating point separates every matched pair"))?,
            ),
        },
        EveStrategy::TimeShift { blinding, arrival_ns } => {
            let blinding = match blinding {
                Some(p) => *p,
                None => {
                    let opts = SearchOptions { half_energy_silent: true, ..Default::default() };
                    let req = Requirements {
                        click: DetectorId::ALL.to_vec(),
                        silent: vec![],
                        half_silent: DetectorId::ALL.to_vec(),
                    };
                    search_point(&ctx.curves, &req, &opts)
                        .ok_or_else(|| infeasible("no blinding point fires every detector at full energy only"))?
                }
            };
            let arrival_ns = match arrival_ns {
                Some(t) => *t,
                None => {
                    let time = |b: Basis| {
                        select_arrival_time(&ctx.curves, &matched_pairs(b))
                            .map(|(t, _)| t)
                            .ok_or_else(|| infeasible(&format!("no arrival time isolates one detector per {b} pair")))
                    };
                    BasisSchedule { z: time(Basis::Z)?, x: time(Basis::X)? }
                }
            };
            EveStrategy::TimeShift { blinding: Some(blinding), arrival_ns: Some(arrival_ns) }
        }
        other => other.clone(),
    })
}
