//! Deterministic sigmoid Emax model mathematics.
//!
//! The mean response at dose `d` is `E0 + Emax * d^h / (d^h + ED50^h)`, with
//! per-patient parameters obtained from linear covariate maps: covariates act
//! additively on E0 (prognostic) and on Emax, and additively on log ED50
//! (predictive).

use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::stats;

/// Dose-response parameters for a single patient (or the reference patient).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseParams {
    pub e0: f64,
    pub emax: f64,
    pub ed50: f64,
    pub h: f64,
    pub sigma: f64,
}

/// The full coefficient set of the hierarchical model: intercepts, covariate
/// effects per block, Hill slope and residual sd. `beta` acts on E0, `gamma`
/// on Emax and `delta` on log ED50.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub alpha_e0: f64,
    pub alpha_emax: f64,
    pub alpha_log_ed50: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub h: f64,
    pub sigma: f64,
}

impl CoefficientSet {
    /// Intercept-only coefficients (all covariate effects zero).
    pub fn intercepts_only(
        alpha_e0: f64,
        alpha_emax: f64,
        alpha_log_ed50: f64,
        h: f64,
        sigma: f64,
        p: usize,
    ) -> Self {
        Self {
            alpha_e0,
            alpha_emax,
            alpha_log_ed50,
            beta: vec![0.0; p],
            gamma: vec![0.0; p],
            delta: vec![0.0; p],
            h,
            sigma,
        }
    }
}

/// `d^h / (d^h + ed50^h)` computed as a logistic in log-dose space;
/// exactly 0 at `d = 0` so the placebo mean never touches `0^h`.
#[inline]
pub fn treatment_fraction(d: f64, log_ed50: f64, h: f64) -> f64 {
    if d <= 0.0 {
        0.0
    } else {
        stats::sigmoid(h * (d.ln() - log_ed50))
    }
}

/// Mean response at dose `d`.
pub fn emax_mean(params: &DoseResponseParams, d: f64) -> f64 {
    params.e0 + params.emax * treatment_fraction(d, params.ed50.ln(), params.h)
}

/// Evaluate the covariate maps for one patient.
///
/// Returns `None` when `exp(alpha_log_ed50 + x'delta)` or any linear predictor
/// is non-finite; callers treat that as a rejected state.
pub fn patient_params(coeffs: &CoefficientSet, x: &[f64]) -> Option<DoseResponseParams> {
    debug_assert_eq!(x.len(), coeffs.beta.len());
    let dot = |v: &[f64]| -> f64 { v.iter().zip(x).map(|(c, xi)| c * xi).sum() };
    let e0 = coeffs.alpha_e0 + dot(&coeffs.beta);
    let emax = coeffs.alpha_emax + dot(&coeffs.gamma);
    let log_ed50 = coeffs.alpha_log_ed50 + dot(&coeffs.delta);
    let ed50 = log_ed50.exp();
    if !(e0.is_finite() && emax.is_finite() && ed50.is_finite() && ed50 > 0.0) {
        return None;
    }
    Some(DoseResponseParams { e0, emax, ed50, h: coeffs.h, sigma: coeffs.sigma })
}

/// Gaussian log likelihood of the whole trial.
///
/// Returns `f64::NEG_INFINITY` for invalid states (non-finite means,
/// non-positive sigma), signalling a rejected state to the sampler.
pub fn log_likelihood(coeffs: &CoefficientSet, data: &TrialDataset) -> f64 {
    let sigma = coeffs.sigma;
    if !(sigma.is_finite() && sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let inv_var = 1.0 / (sigma * sigma);
    let base = -0.5 * stats::LN_2PI - sigma.ln();
    let mut ll = 0.0;
    for i in 0..data.n() {
        let x = data.x_row(i);
        let Some(params) = patient_params(coeffs, x) else {
            return f64::NEG_INFINITY;
        };
        let mu = emax_mean(&params, data.doses()[i]);
        if !mu.is_finite() {
            return f64::NEG_INFINITY;
        }
        let e = data.responses()[i] - mu;
        ll += base - 0.5 * e * e * inv_var;
    }
    ll
}
