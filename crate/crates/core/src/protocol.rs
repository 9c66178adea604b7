//! Session simulation: honest ddiQKD baseline and attacked runs.
//!
//! Each slot draws Alice's phase and Bob's modulator phase uniformly from the
//! four BB84 phases. Without an attack a single photon crosses a lossy channel
//! and lands on one detector with the receiver's click probabilities. Under
//! attack Eve sits at Alice's output, measures, and resends a bright pulse
//! whose detector energies decide the clicks; the channel loss does not apply.
//!
//! Every slot has its own ChaCha8 stream (seed, stream = slot index), so
//! parallel and sequential runs produce identical records.
//! [`enumerate_exact`] replaces sampling by summation and serves as the
//! oracle for Monte Carlo runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle::{Basis, Bb84Phase};
use crate::attacks::{measure_phase, measurement_distribution, AttackContext, AttackPlan, EveStrategy};
use crate::detectors::{load_curves, PHOTON_ENERGY_1550NM_PJ};
use crate::error::{Error, Result};
use crate::receiver::{bell_outcome, single_photon_click_probabilities, BellOutcome, ReceiverConfig};
use crate::sifting::sift_and_key;

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn photon_energy() -> f64 {
    PHOTON_ENERGY_1550NM_PJ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSettings {
    /// Honest-mode detection efficiency.
    #[serde(default = "one")]
    pub efficiency: f64,
    /// Honest-mode per-detector dark count probability per slot.
    #[serde(default)]
    pub dark_count_probability: f64,
    /// Blinded response curves, needed by the curve-based attacks. Relative
    /// paths are resolved against the config file's directory.
    #[serde(default)]
    pub curves_path: Option<PathBuf>,
    /// Energy of one photon in pJ; maps mean photon numbers onto the curves.
    #[serde(default = "photon_energy")]
    pub pj_per_photon: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            dark_count_probability: 0.0,
            curves_path: None,
            pj_per_photon: PHOTON_ENERGY_1550NM_PJ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub n_slots: u64,
    #[serde(default = "one")]
    pub channel_transmittance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub receiver: ReceiverConfig,
    #[serde(default)]
    pub detectors: DetectorSettings,
    #[serde(default)]
    pub attack: Option<EveStrategy>,
    /// Probability that Eve measures in the Z basis.
    #[serde(default = "half")]
    pub eve_z_probability: f64,
}

impl SessionConfig {
    pub fn honest(n_slots: u64, seed: u64) -> Self {
        Self {
            n_slots,
            channel_transmittance: 1.0,
            seed,
            receiver: ReceiverConfig::default(),
            detectors: DetectorSettings::default(),
            attack: None,
            eve_z_probability: 0.5,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(curves) = &cfg.detectors.curves_path {
            if curves.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.detectors.curves_path = Some(base.join(curves));
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("session config: {e}")))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slots == 0 {
            return Err(Error::Validation("n_slots must be >= 1".into()));
        }
        let eta = self.channel_transmittance;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Range { what: "channel_transmittance".into(), value: eta, min: 0.0, max: 1.0 });
        }
        let d = &self.detectors;
        if !(d.efficiency > 0.0 && d.efficiency <= 1.0) {
            return Err(Error::Range { what: "efficiency".into(), value: d.efficiency, min: 0.0, max: 1.0 });
        }
        if !(0.0..=1.0).contains(&d.dark_count_probability) {
            return Err(Error::Range {
                what: "dark_count_probability".into(),
                value: d.dark_count_probability,
                min: 0.0,
                max: 1.0,
            });
        }
        if !(0.0..=1.0).contains(&self.eve_z_probability) {
            return Err(Error::Range {
                what: "eve_z_probability".into(),
                value: self.eve_z_probability,
                min: 0.0,
                max: 1.0,
            });
        }
        self.receiver.validate()
    }

    pub fn attack_context(&self) -> Result<AttackContext> {
        let curves = match &self.detectors.curves_path {
            Some(p) => load_curves(p)?,
            None => Vec::new(),
        };
        Ok(AttackContext::new(self.receiver.clone(), curves, self.detectors.pj_per_photon))
    }

    fn eve_basis_probability(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Z => self.eve_z_probability,
            Basis::X => 1.0 - self.eve_z_probability,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EveRecord {
    pub basis: Basis,
    /// Eve's measurement result.
    pub measured: Bb84Phase,
    /// Phase actually imprinted on the resent pulse.
    pub pulse_phi_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub slot: u64,
    pub theta_a: Bb84Phase,
    pub phi_b: Bb84Phase,
    pub eve: Option<EveRecord>,
    /// Mean photon numbers reaching D1..D4.
    pub energies: [f64; 4],
    pub outcome: BellOutcome,
    pub sifted: bool,
    pub alice_bit: Option<u8>,
    pub bob_bit: Option<u8>,
    pub eve_bit: Option<u8>,
}

/// Weighted event counts; unit weights for sampled slots, probabilities for
/// exact enumeration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Tally {
    pub slots: f64,
    pub single: f64,
    pub double: f64,
    pub no_click: f64,
    pub sifted: f64,
    pub errors: f64,
    pub eve_correct: f64,
    pub bell: [f64; 4],
}

impl Tally {
    fn add(mut self, o: Tally) -> Tally {
        self.slots += o.slots;
        self.single += o.single;
        self.double += o.double;
        self.no_click += o.no_click;
        self.sifted += o.sifted;
        self.errors += o.errors;
        self.eve_correct += o.eve_correct;
        for i in 0..4 {
            self.bell[i] += o.bell[i];
        }
        self
    }

    fn record(&mut self, w: f64, outcome: BellOutcome, keyed: Option<(u8, u8)>, eve_bit: Option<u8>) {
        self.slots += w;
        match outcome {
            BellOutcome::NoClick => self.no_click += w,
            BellOutcome::DoubleClick => self.double += w,
            single => {
                self.single += w;
                self.bell[single.detector().unwrap()] += w;
            }
        }
        if let Some((a, b)) = keyed {
            self.sifted += w;
            if a != b {
                self.errors += w;
            }
            if eve_bit == Some(b) {
                self.eve_correct += w;
            }
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 { num / den } else { 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionStats {
    pub exact: bool,
    pub n_slots: u64,
    /// Single-click events per slot.
    pub gain: f64,
    pub sifted_rate: f64,
    pub qber: f64,
    pub double_click_rate: f64,
    pub no_click_rate: f64,
    /// Single clicks per Bell outcome (psi+, phi+, psi-, phi-); expected
    /// counts for exact enumeration.
    pub bell_histogram: [f64; 4],
    /// Fraction of sifted bits Eve knows; absent without an attack.
    pub eve_knowledge: Option<f64>,
    pub tally: Tally,
}

impl SessionStats {
    fn from_tally(t: Tally, n_slots: u64, exact: bool, attacked: bool) -> Self {
        let scale = if exact { n_slots as f64 } else { 1.0 };
        Self {
            exact,
            n_slots,
            gain: ratio(t.single, t.slots),
            sifted_rate: ratio(t.sifted, t.slots),
            qber: ratio(t.errors, t.sifted),
            double_click_rate: ratio(t.double, t.slots),
            no_click_rate: ratio(t.no_click, t.slots),
            bell_histogram: t.bell.map(|b| b * scale),
            eve_knowledge: attacked.then(|| ratio(t.eve_correct, t.sifted)),
            tally: t,
        }
    }
}

/// A validated configuration with its attack resolved.
#[derive(Debug, Clone)]
pub struct Session {
    cfg: SessionConfig,
    plan: Option<AttackPlan>,
}

impl Session {
    /// Fails with a feasibility error before any slot runs when the attack
    /// cannot succeed.
    pub fn new(cfg: &SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let plan = match &cfg.attack {
            Some(strategy) => Some(AttackPlan::new(strategy, cfg.attack_context()?)?),
            None => None,
        };
        Ok(Self { cfg: cfg.clone(), plan })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn plan(&self) -> Option<&AttackPlan> {
        self.plan.as_ref()
    }

    pub fn slot_rng(&self, slot: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(slot);
        rng
    }

    /// Simulates one slot from its own substream.
    pub fn run_slot(&self, slot: u64) -> Result<TrialRecord> {
        let mut rng = self.slot_rng(slot);
        let theta_a = Bb84Phase::from_index(rng.gen_range(0..4));
        let phi_b = Bb84Phase::from_index(rng.gen_range(0..4));
        let (eve, energies, clicks) = match &self.plan {
            None => {
                let (energies, clicks) = self.honest_clicks(theta_a, phi_b, &mut rng)?;
                (None, energies, clicks)
            }
            Some(plan) => {
                let basis = if rng.gen_bool(self.cfg.eve_z_probability) { Basis::Z } else { Basis::X };
                let measured = measure_phase(theta_a, basis, &mut rng);
                let probs = plan.click_probabilities(measured, phi_b);
                let mut clicks = [false; 4];
                for i in 0..4 {
                    clicks[i] = rng.gen::<f64>() < probs[i];
                }
                let eve = EveRecord { basis, measured, pulse_phi_e: plan.pulse(measured).phi_e };
                (Some(eve), plan.energies(measured, phi_b), clicks)
            }
        };
        let outcome = bell_outcome(clicks);
        let keyed = if outcome.is_single_click() { sift_and_key(theta_a, phi_b, outcome)? } else { None };
        let eve_bit = match (&self.plan, &eve, keyed) {
            (Some(plan), Some(e), Some(_)) => Some(plan.infer_bob_phase(e.measured, phi_b.basis(), outcome).bit()),
            _ => None,
        };
        Ok(TrialRecord {
            slot,
            theta_a,
            phi_b,
            eve,
            energies,
            outcome,
            sifted: keyed.is_some(),
            alice_bit: keyed.map(|k| k.alice),
            bob_bit: keyed.map(|k| k.bob),
            eve_bit,
        })
    }

    fn honest_clicks<R: Rng>(&self, theta_a: Bb84Phase, phi_b: Bb84Phase, rng: &mut R) -> Result<([f64; 4], [bool; 4])> {
        let p = single_photon_click_probabilities(&self.cfg.receiver, phi_b.radians(), theta_a.radians())?;
        let active = self.cfg.receiver.active_detectors;
        let d = &self.cfg.detectors;
        let mut clicks = [false; 4];
        if rng.gen::<f64>() < self.cfg.channel_transmittance {
            let landing = WeightedIndex::new(p).map_err(|e| Error::Degenerate(e.to_string()))?;
            let hit = landing.sample(rng);
            if active[hit] && rng.gen::<f64>() < d.efficiency {
                clicks[hit] = true;
            }
        }
        if d.dark_count_probability > 0.0 {
            for i in 0..4 {
                if active[i] && rng.gen::<f64>() < d.dark_count_probability {
                    clicks[i] = true;
                }
            }
        }
        Ok((p, clicks))
    }

    fn tally_record(&self, r: &TrialRecord) -> Tally {
        let mut t = Tally::default();
        let keyed = r.alice_bit.zip(r.bob_bit);
        t.record(1.0, r.outcome, keyed, r.eve_bit);
        t
    }

    /// Runs every slot, in parallel, keeping records when asked.
    pub fn run(&self, keep_records: bool) -> Result<SessionOutput> {
        let n = self.cfg.n_slots;
        let attacked = self.plan.is_some();
        if keep_records {
            let records: Vec<TrialRecord> = (0..n).into_par_iter().map(|s| self.run_slot(s)).collect::<Result<_>>()?;
            let tally = records.iter().map(|r| self.tally_record(r)).fold(Tally::default(), Tally::add);
            Ok(SessionOutput { stats: SessionStats::from_tally(tally, n, false, attacked), records: Some(records) })
        } else {
            let tally = (0..n)
                .into_par_iter()
                .map(|s| self.run_slot(s).map(|r| self.tally_record(&r)))
                .try_reduce(Tally::default, |a, b| Ok(a.add(b)))?;
            Ok(SessionOutput { stats: SessionStats::from_tally(tally, n, false, attacked), records: None })
        }
    }

    /// Exact rates by summing over every discrete choice.
    pub fn enumerate(&self) -> Result<SessionStats> {
        let mut t = Tally::default();
        for theta_a in Bb84Phase::ALL {
            for phi_b in Bb84Phase::ALL {
                let w = 1.0 / 16.0;
                match &self.plan {
                    None => {
                        for (clicks, p) in self.honest_patterns(theta_a, phi_b)? {
                            let outcome = bell_outcome(clicks);
                            let keyed = exact_key(theta_a, phi_b, outcome)?;
                            t.record(w * p, outcome, keyed, None);
                        }
                    }
                    Some(plan) => {
                        for basis in Basis::ALL {
                            let wb = self.cfg.eve_basis_probability(basis);
                            for (measured, pm) in measurement_distribution(theta_a, basis) {
                                let probs = plan.click_probabilities(measured, phi_b);
                                for (clicks, p) in independent_patterns(&probs) {
                                    let outcome = bell_outcome(clicks);
                                    let keyed = exact_key(theta_a, phi_b, outcome)?;
                                    let eve_bit = keyed
                                        .map(|_| plan.infer_bob_phase(measured, phi_b.basis(), outcome).bit());
                                    t.record(w * wb * pm * p, outcome, keyed, eve_bit);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(SessionStats::from_tally(t, self.cfg.n_slots, true, self.plan.is_some()))
    }

    fn honest_patterns(&self, theta_a: Bb84Phase, phi_b: Bb84Phase) -> Result<Vec<([bool; 4], f64)>> {
        let p = single_photon_click_probabilities(&self.cfg.receiver, phi_b.radians(), theta_a.radians())?;
        let active = self.cfg.receiver.active_detectors;
        let eta = self.cfg.channel_transmittance * self.cfg.detectors.efficiency;
        let dark = self.cfg.detectors.dark_count_probability;
        // Where the photon ends up: a clicking detector, or nowhere.
        let mut landing: Vec<(Option<usize>, f64)> = vec![(None, 1.0 - self.cfg.channel_transmittance)];
        for i in 0..4 {
            if active[i] {
                landing.push((Some(i), eta * p[i]));
                landing.push((None, self.cfg.channel_transmittance * (1.0 - self.cfg.detectors.efficiency) * p[i]));
            } else {
                landing.push((None, self.cfg.channel_transmittance * p[i]));
            }
        }
        let mut out = Vec::new();
        for (hit, ph) in landing {
            if ph == 0.0 {
                continue;
            }
            let probs: [f64; 4] = std::array::from_fn(|j| {
                if hit == Some(j) {
                    1.0
                } else if active[j] {
                    dark
                } else {
                    0.0
                }
            });
            out.extend(independent_patterns(&probs).into_iter().map(|(c, q)| (c, q * ph)));
        }
        Ok(out)
    }
}

fn exact_key(theta_a: Bb84Phase, phi_b: Bb84Phase, outcome: BellOutcome) -> Result<Option<(u8, u8)>> {
    if !outcome.is_single_click() {
        return Ok(None);
    }
    Ok(sift_and_key(theta_a, phi_b, outcome)?.map(|k| (k.alice, k.bob)))
}

/// Click patterns with nonzero probability for independent detectors.
pub fn independent_patterns(probs: &[f64; 4]) -> Vec<([bool; 4], f64)> {
    (0u8..16)
        .filter_map(|mask| {
            let clicks = [0, 1, 2, 3].map(|i| mask >> i & 1 == 1);
            let p: f64 = (0..4).map(|i| if clicks[i] { probs[i] } else { 1.0 - probs[i] }).product();
            (p > 0.0).then_some((clicks, p))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub stats: SessionStats,
    pub records: Option<Vec<TrialRecord>>,
}

pub fn run_session(cfg: &SessionConfig, keep_records: bool) -> Result<SessionOutput> {
    Session::new(cfg)?.run(keep_records)
}

pub fn enumerate_exact(cfg: &SessionConfig) -> Result<SessionStats> {
    Session::new(cfg)?.enumerate()
}

pub const TRIAL_CSV_HEADER: [&str; 13] =
    ["slot", "theta_A", "phi_B", "phi_E", "E1", "E2", "E3", "E4", "outcome", "sifted", "a", "b", "e"];

pub fn write_trials_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Config(format!("writing trial CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_CSV_HEADER).map_err(io)?;
    let bit = |b: Option<u8>| b.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let mut row = vec![
            r.slot.to_string(),
            r.theta_a.radians().to_string(),
            r.phi_b.radians().to_string(),
            r.eve.map(|e| e.pulse_phi_e.to_string()).unwrap_or_default(),
        ];
        row.extend(r.energies.iter().map(|e| e.to_string()));
        row.extend([
            r.outcome.label().to_string(),
            u8::from(r.sifted).to_string(),
            bit(r.alice_bit),
            bit(r.bob_bit),
            bit(r.eve_bit),
        ]);
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing trial CSV: {e}")))?;
    Ok(())
}

/// Whether `count` successes out of `n` trials lie within `k` binomial
/// standard deviations of rate `p`; degenerate rates demand exact agreement.
pub fn within_binomial_sigma(count: f64, n: f64, p: f64, k: f64) -> bool {
    let mean = n * p;
    let sd = (n * p * (1.0 - p)).max(0.0).sqrt();
    if sd < 1e-12 {
        (count - mean).abs() < 1e-6
    } else {
        (count - mean).abs() <= k * sd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakevenReport {
    /// Largest channel transmittance at which the attack's gain still meets
    /// the honest gain.
    pub transmittance: f64,
    pub loss_db: f64,
    pub attacked_gain: f64,
    pub attacked_sifted_rate: f64,
    pub honest_gain_lossless: f64,
    pub honest_sifted_rate_lossless: f64,
    /// Transmittance of a 3 dB loss, the break-even usually quoted for the
    /// single-detector attack.
    pub nominal_3db_transmittance: f64,
    pub agrees_with_3db: bool,
}

/// Honest gain of `cfg` without its attack at transmittance `eta`.
fn honest_gain(cfg: &SessionConfig, eta: f64) -> Result<f64> {
    let honest = SessionConfig { attack: None, channel_transmittance: eta, ..cfg.clone() };
    Ok(enumerate_exact(&honest)?.gain)
}

/// Largest η ∈ [0, 1] with attacked gain ≥ honest gain, both exact. Without
/// an attack the session is compared with itself and the answer is 1.
pub fn breakeven_transmittance(cfg: &SessionConfig) -> Result<BreakevenReport> {
    const TOL: f64 = 1e-12;
    let attacked = match cfg.attack {
        Some(_) => Some(enumerate_exact(&SessionConfig { channel_transmittance: 1.0, ..cfg.clone() })?),
        None => None,
    };
    // The attack does not see channel loss, so its gain is fixed; without an
    // attack it tracks the honest gain at the same η.
    let attacked_gain = |eta: f64| -> Result<f64> {
        match &attacked {
            Some(s) => Ok(s.gain),
            None => honest_gain(cfg, eta),
        }
    };
    let ok = |eta: f64| -> Result<bool> { Ok(attacked_gain(eta)? + TOL >= honest_gain(cfg, eta)?) };
    let transmittance = if ok(1.0)? {
        1.0
    } else if attacked_gain(0.0)? <= TOL {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if mid > 0.0 && ok(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let honest = enumerate_exact(&SessionConfig { attack: None, channel_transmittance: 1.0, ..cfg.clone() })?;
    let (ag, asr) = match &attacked {
        Some(s) => (s.gain, s.sifted_rate),
        None => (honest.gain, honest.sifted_rate),
    };
    Ok(BreakevenReport {
        transmittance,
        loss_db: if transmittance > 0.0 { 10.0 * (1.0 / transmittance).log10() } else { f64::INFINITY },
        attacked_gain: ag,
        attacked_sifted_rate: asr,
        honest_gain_lossless: honest.gain,
        honest_sifted_rate_lossless: honest.sifted_rate,
        nominal_3db_transmittance: 0.5,
        agrees_with_3db: (transmittance - 0.5).abs() < 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attacked(strategy: EveStrategy, receiver: ReceiverConfig) -> SessionConfig {
        SessionConfig { receiver, attack: Some(strategy), ..SessionConfig::honest(20_000, 3) }
    }

    #[test]
    fn honest_exact_rates() {
        let s = enumerate_exact(&SessionConfig::honest(1, 0)).unwrap();
        assert!((s.gain - 1.0).abs() < 1e-12);
        assert!((s.sifted_rate - 0.5).abs() < 1e-12);
        assert_eq!(s.qber, 0.0);
        assert_eq!(s.eve_knowledge, None);
    }

    #[test]
    fn lossy_honest_gain_scales() {
        let cfg = SessionConfig { channel_transmittance: 0.3, ..SessionConfig::honest(1, 0) };
        assert!((enumerate_exact(&cfg).unwrap().gain - 0.3).abs() < 1e-12);
    }

    #[test]
    fn dark_counts_produce_errors_and_double_clicks() {
        // Errors need a lost photon; a dark count beside a detected photon
        // is a double click.
        let mut cfg = SessionConfig { channel_transmittance: 0.5, ..SessionConfig::honest(1, 0) };
        cfg.detectors.dark_count_probability = 0.01;
        let s = enumerate_exact(&cfg).unwrap();
        assert!(s.qber > 0.0 && s.double_click_rate > 0.0);
        let total = s.gain + s.double_click_rate + s.no_click_rate;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_detector_attack_exact() {
        let cfg = attacked(
            EveStrategy::SingleDetectorBlinding { mu: 1.0, mu_th: 0.75 },
            ReceiverConfig::single_detector(0),
        );
        let s = enumerate_exact(&cfg).unwrap();
        assert!((s.gain - 0.25).abs() < 1e-12);
        assert!((s.sifted_rate - 0.125).abs() < 1e-12);
        assert_eq!((s.qber, s.double_click_rate), (0.0, 0.0));
        assert_eq!(s.eve_knowledge, Some(1.0));
    }

    #[test]
    fn parallel_equals_sequential() {
        let cfg = SessionConfig { channel_transmittance: 0.7, ..SessionConfig::honest(2_000, 11) };
        let session = Session::new(&cfg).unwrap();
        let par = session.run(true).unwrap().records.unwrap();
        let seq: Vec<_> = (0..cfg.n_slots).map(|s| session.run_slot(s).unwrap()).collect();
        assert_eq!(par, seq);
    }

    #[test]
    fn seeds_matter() {
        let a = run_session(&SessionConfig::honest(500, 1), true).unwrap();
        let b = run_session(&SessionConfig::honest(500, 2), true).unwrap();
        assert_ne!(a.records, b.records);
    }

    #[test]
    fn infeasible_attack_fails_before_running() {
        let cfg = attacked(
            EveStrategy::SingleDetectorBlinding { mu: 1.0, mu_th: 0.4 },
            ReceiverConfig::single_detector(0),
        );
        assert_eq!(run_session(&cfg, false).unwrap_err().kind(), "infeasible");
    }

    #[test]
    fn config_validation() {
        assert!(SessionConfig::honest(0, 0).validate().is_err());
        let cfg = SessionConfig { channel_transmittance: 1.5, ..SessionConfig::honest(1, 0) };
        assert_eq!(cfg.validate().unwrap_err().kind(), "range");
        assert_eq!(SessionConfig::from_json("{\"n_slots\": 1, \"bogus\": 2}").unwrap_err().kind(), "config");
        let cfg = SessionConfig::from_json(r#"{"n_slots": 5}"#).unwrap();
        assert_eq!(cfg, SessionConfig::honest(5, 0));
    }

    #[test]
    fn csv_layout() {
        let out = run_session(&SessionConfig::honest(3, 0), true).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(out.records.as_ref().unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "slot,theta_A,phi_B,phi_E,E1,E2,E3,E4,outcome,sifted,a,b,e");
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn binomial_bounds() {
        assert!(within_binomial_sigma(5_100.0, 10_000.0, 0.5, 3.0));
        assert!(!within_binomial_sigma(5_200.0, 10_000.0, 0.5, 3.0));
        assert!(within_binomial_sigma(0.0, 10_000.0, 0.0, 3.0));
        assert!(!within_binomial_sigma(1.0, 10_000.0, 0.0, 3.0));
    }

    #[test]
    fn breakeven_trivial_cases() {
        let r = breakeven_transmittance(&SessionConfig::honest(1, 0)).unwrap();
        assert_eq!(r.transmittance, 1.0);
        // Blinding every detector only produces double clicks: zero gain.
        let cfg = attacked(EveStrategy::SingleDetectorBlinding { mu: 1.0, mu_th: 0.75 }, ReceiverConfig::default());
        assert_eq!(breakeven_transmittance(&cfg).unwrap().transmittance, 0.0);
    }

    #[test]
    fn breakeven_against_four_detector_receiver() {
        // An attack with half the lossless gain breaks even at η = 1/2.
        let cfg = attacked(
            EveStrategy::WavelengthBs { gamma: 0.2, t1: 0.44, t2: 0.46, mu: 1.0, mu_th: 0.89 },
            ReceiverConfig::default(),
        );
        let r = breakeven_transmittance(&cfg).unwrap();
        assert!((r.transmittance - 0.5).abs() < 1e-9, "{r:?}");
        assert!(r.agrees_with_3db);
    }
}
