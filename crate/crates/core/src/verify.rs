//! Randomized comparison of the propagated receiver network with the
//! closed-form detector amplitudes.

use std::f64::consts::TAU;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::optics::ComplexAmp;
use crate::receiver::{balanced_closed_form, general_closed_form, receiver_amplitudes, ReceiverConfig};

pub const AMPLITUDE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    /// Balanced splitters, diagonal input polarization.
    Balanced,
    /// Arbitrary splitting ratios and input polarization.
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DrawParams {
    pub mu: f64,
    pub phi_e: f64,
    pub phi_b: f64,
    pub gamma: f64,
    pub t1: f64,
    pub t2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub form: ClosedForm,
    pub trials: usize,
    /// Largest per-port modulus of the amplitude difference.
    pub max_error: f64,
    pub worst: Option<DrawParams>,
    /// For the general form: largest deviation from the balanced form at
    /// `t1 = t2 = γ = 1/2`.
    pub reduction_error: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

fn max_port_error(a: &[ComplexAmp; 4], b: &[ComplexAmp; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn draw_params<R: Rng + ?Sized>(form: ClosedForm, rng: &mut R) -> DrawParams {
    let mut p = DrawParams {
        mu: rng.gen_range(0.01..10.0),
        phi_e: rng.gen_range(0.0..TAU),
        phi_b: rng.gen_range(0.0..TAU),
        gamma: 0.5,
        t1: 0.5,
        t2: 0.5,
    };
    if form == ClosedForm::General {
        p.gamma = rng.gen_range(0.0..=1.0);
        p.t1 = rng.gen_range(0.01..0.99);
        p.t2 = rng.gen_range(0.01..0.99);
    }
    p
}

pub fn network_error(form: ClosedForm, p: &DrawParams) -> Result<f64> {
    let cfg = ReceiverConfig::default().with_splitting(p.t1, p.t2);
    let net = receiver_amplitudes(&cfg, p.phi_b, p.mu, p.phi_e, p.gamma)?;
    let closed = match form {
        ClosedForm::Balanced => balanced_closed_form(p.mu, p.phi_e, p.phi_b)?,
        ClosedForm::General => general_closed_form(p.mu, p.phi_e, p.gamma, p.t1, p.t2, p.phi_b)?,
    };
    Ok(max_port_error(&net, &closed))
}

pub fn verify_closed_form<R: Rng + ?Sized>(form: ClosedForm, trials: usize, rng: &mut R) -> Result<VerifyReport> {
    let mut max_error = 0.0;
    let mut worst = None;
    let mut reduction: Option<f64> = (form == ClosedForm::General).then_some(0.0);
    for _ in 0..trials {
        let p = draw_params(form, rng);
        let err = network_error(form, &p)?;
        if worst.is_none() || err > max_error {
            max_error = err;
            worst = Some(p);
        }
        if let Some(r) = reduction.as_mut() {
            let g = general_closed_form(p.mu, p.phi_e, 0.5, 0.5, 0.5, p.phi_b)?;
            let b = balanced_closed_form(p.mu, p.phi_e, p.phi_b)?;
            *r = r.max(max_port_error(&g, &b));
        }
    }
    let passed = max_error < AMPLITUDE_TOLERANCE && reduction.is_none_or(|r| r < AMPLITUDE_TOLERANCE);
    Ok(VerifyReport {
        form,
        trials,
        max_error,
        worst,
        reduction_error: reduction,
        tolerance: AMPLITUDE_TOLERANCE,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn both_forms_verify() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for form in [ClosedForm::Balanced, ClosedForm::General] {
            let r = verify_closed_form(form, 500, &mut rng).unwrap();
            assert!(r.passed, "{r:?}");
            assert_eq!(r.reduction_error.is_some(), form == ClosedForm::General);
        }
    }

    #[test]
    fn balanced_draws_stay_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let p = draw_params(ClosedForm::Balanced, &mut rng);
            assert_eq!((p.gamma, p.t1, p.t2), (0.5, 0.5, 0.5));
        }
    }
}
