//! Click models for Bob's detectors.
//!
//! Three models are provided: a bare threshold on mean photon number, a
//! blinded detector whose "never click" and "always click" trigger energies
//! depend on the blinding power, and the same blinded detector restricted to
//! a temporal response window.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy of one 1550 nm photon in picojoules.
pub const PHOTON_ENERGY_1550NM_PJ: f64 = 1.281_570_2e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorId {
    D1,
    D2,
    D3,
    D4,
}

impl DetectorId {
    pub const ALL: [DetectorId; 4] = [DetectorId::D1, DetectorId::D2, DetectorId::D3, DetectorId::D4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<DetectorId> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.index() + 1)
    }
}

impl FromStr for DetectorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D1" => Ok(DetectorId::D1),
            "D2" => Ok(DetectorId::D2),
            "D3" => Ok(DetectorId::D3),
            "D4" => Ok(DetectorId::D4),
            other => Err(Error::Validation(format!("unknown detector '{other}'"))),
        }
    }
}

/// A blinded detector that clicks deterministically at or above `mu_th`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDetector {
    mu_th: f64,
}

impl ThresholdDetector {
    pub fn new(mu_th: f64) -> Result<Self> {
        if !(mu_th > 0.0) || !mu_th.is_finite() {
            return Err(Error::Validation(format!("threshold {mu_th} must be > 0")));
        }
        Ok(Self { mu_th })
    }

    pub fn mu_th(&self) -> f64 {
        self.mu_th
    }
}

pub fn threshold_click(energy: f64, det: &ThresholdDetector) -> bool {
    energy >= det.mu_th
}

/// Piecewise-linear function over sorted breakpoints; no extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("curve has no points".into()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Validation("curve has non-finite points".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Validation("curve points are not strictly increasing in x".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let i = self.points.partition_point(|&(px, _)| px < x);
        if i == 0 {
            return Some(self.points[0].1);
        }
        let (x0, y0) = self.points[i - 1];
        let (x1, y1) = self.points[i];
        Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start_ns: f64,
    pub end_ns: f64,
}

impl TimeWindow {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_ns && t <= self.end_ns
    }
}

/// Trigger thresholds of one blinded detector versus blinding power, plus its
/// temporal response window. Energies in pJ, power in mW, time in ns.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorResponseCurve {
    id: DetectorId,
    never: PiecewiseLinear,
    always: PiecewiseLinear,
    window: TimeWindow,
}

impl DetectorResponseCurve {
    pub fn new(
        id: DetectorId,
        never: Vec<(f64, f64)>,
        always: Vec<(f64, f64)>,
        window: TimeWindow,
    ) -> Result<Self> {
        let never = PiecewiseLinear::new(never)
            .map_err(|e| Error::Validation(format!("{id} never-click curve: {e}")))?;
        let always = PiecewiseLinear::new(always)
            .map_err(|e| Error::Validation(format!("{id} always-click curve: {e}")))?;
        if !(window.start_ns < window.end_ns) {
            return Err(Error::Validation(format!(
                "{id} response window [{}, {}] is empty",
                window.start_ns, window.end_ns
            )));
        }
        let curve = Self { id, never, always, window };
        let (lo, hi) = curve.domain().ok_or_else(|| {
            Error::Validation(format!("{id} never/always curves cover disjoint power ranges"))
        })?;
        // Both curves are linear between the union of breakpoints, so checking
        // the ordering there covers the whole shared range.
        let xs = curve.never.points().iter().chain(curve.always.points()).map(|p| p.0);
        for x in xs.filter(|&x| x >= lo && x <= hi) {
            let (n, a) = (curve.never.eval(x).unwrap(), curve.always.eval(x).unwrap());
            if n > a {
                return Err(Error::Validation(format!(
                    "{id}: never-click energy {n} exceeds always-click energy {a} at P_B={x} mW"
                )));
            }
            if n < 0.0 {
                return Err(Error::Validation(format!("{id}: negative threshold at P_B={x} mW")));
            }
        }
        Ok(curve)
    }

    pub fn id(&self) -> DetectorId {
        self.id
    }

    pub fn window(&self) -> TimeWindow {
        self.window
    }

    pub fn never(&self) -> &PiecewiseLinear {
        &self.never
    }

    pub fn always(&self) -> &PiecewiseLinear {
        &self.always
    }

    /// Blinding-power range covered by both threshold curves.
    pub fn domain(&self) -> Option<(f64, f64)> {
        let (a0, a1) = self.never.domain();
        let (b0, b1) = self.always.domain();
        let (lo, hi) = (a0.max(b0), a1.min(b1));
        (lo <= hi).then_some((lo, hi))
    }

    fn range_error(&self, p_b: f64) -> Error {
        let (min, max) = self.domain().unwrap_or((f64::NAN, f64::NAN));
        Error::Range {
            what: format!("{} blinding power (mW)", self.id),
            value: p_b,
            min,
            max,
        }
    }

    /// Largest trigger energy with zero click probability at `p_b`.
    pub fn e_never(&self, p_b: f64) -> Result<f64> {
        self.check_domain(p_b)?;
        Ok(self.never.eval(p_b).unwrap())
    }

    /// Smallest trigger energy with unit click probability at `p_b`.
    pub fn e_always(&self, p_b: f64) -> Result<f64> {
        self.check_domain(p_b)?;
        Ok(self.always.eval(p_b).unwrap())
    }

    fn check_domain(&self, p_b: f64) -> Result<()> {
        match self.domain() {
            Some((lo, hi)) if p_b >= lo && p_b <= hi => Ok(()),
            _ => Err(self.range_error(p_b)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerPulse {
    pub energy_pj: f64,
    pub arrival_time_ns: f64,
}

/// Click probability of a blinded detector for trigger energy `e_t` (pJ) at
/// blinding power `p_b` (mW), linear between the two thresholds.
pub fn blinded_click_probability(curve: &DetectorResponseCurve, p_b: f64, e_t: f64) -> Result<f64> {
    if !(e_t >= 0.0) {
        return Err(Error::Validation(format!("trigger energy {e_t} must be >= 0")));
    }
    let never = curve.e_never(p_b)?;
    let always = curve.e_always(p_b)?;
    Ok(if e_t >= always {
        1.0
    } else if e_t <= never {
        0.0
    } else {
        (e_t - never) / (always - never)
    })
}

/// Click probability including the response window: zero outside it.
pub fn temporal_click_probability(
    curve: &DetectorResponseCurve,
    pulse: &TriggerPulse,
    p_b: f64,
) -> Result<f64> {
    let p = blinded_click_probability(curve, p_b, pulse.energy_pj)?;
    Ok(if curve.window.contains(pulse.arrival_time_ns) { p } else { 0.0 })
}

/// Samples a click. Exactly one uniform is drawn per call, so probabilities
/// of 0 and 1 give the same answer for every RNG state.
pub fn temporal_click<R: Rng + ?Sized>(
    curve: &DetectorResponseCurve,
    pulse: &TriggerPulse,
    p_b: f64,
    rng: &mut R,
) -> Result<bool> {
    let p = temporal_click_probability(curve, pulse, p_b)?;
    Ok(rng.gen::<f64>() < p)
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    detector: String,
    kind: String,
    #[serde(rename = "P_B_mW")]
    x: f64,
    #[serde(rename = "E_pJ")]
    y: f64,
}

const CURVE_HEADER: [&str; 4] = ["detector", "kind", "P_B_mW", "E_pJ"];

/// Loads and validates response curves from CSV.
///
/// Columns are `detector,kind,P_B_mW,E_pJ` with `kind` one of `never` or
/// `always`. A `window` row reuses the two numeric columns as
/// `t_start_ns,t_end_ns`. Lines starting with `#` are ignored. Curves are
/// returned ordered by detector.
pub fn load_curves(path: impl AsRef<Path>) -> Result<Vec<DetectorResponseCurve>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::load(path, e))?;
    parse_curves(&text).map_err(|e| match e {
        Error::Load { .. } => e,
        other => Error::load(path, other),
    })
}

pub fn parse_curves(text: &str) -> Result<Vec<DetectorResponseCurve>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Validation(format!("bad header: {e}")))?
        .clone();
    if header.iter().ne(CURVE_HEADER) {
        return Err(Error::Validation(format!(
            "expected header '{}', found '{}'",
            CURVE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    #[derive(Default)]
    struct Partial {
        never: Vec<(f64, f64)>,
        always: Vec<(f64, f64)>,
        window: Option<TimeWindow>,
    }
    let mut parts: [Option<Partial>; 4] = Default::default();
    for (line, row) in reader.deserialize::<CurveRow>().enumerate() {
        let row = row.map_err(|e| Error::Validation(format!("row {}: {e}", line + 1)))?;
        let id: DetectorId = row.detector.parse()?;
        let part = parts[id.index()].get_or_insert_with(Partial::default);
        match row.kind.as_str() {
            "never" => part.never.push((row.x, row.y)),
            "always" => part.always.push((row.x, row.y)),
            "window" => {
                if part.window.is_some() {
                    return Err(Error::Validation(format!("{id} has more than one window row")));
                }
                part.window = Some(TimeWindow { start_ns: row.x, end_ns: row.y });
            }
            other => return Err(Error::Validation(format!("unknown row kind '{other}'"))),
        }
    }

    let mut curves = Vec::new();
    for (i, part) in parts.into_iter().enumerate() {
        let Some(part) = part else { continue };
        let id = DetectorId::from_index(i).unwrap();
        let window = part
            .window
            .ok_or_else(|| Error::Validation(format!("{id} has no window row")))?;
        curves.push(DetectorResponseCurve::new(id, part.never, part.always, window)?);
    }
    if curves.is_empty() {
        return Err(Error::Validation("no curves found".into()));
    }
    Ok(curves)
}
