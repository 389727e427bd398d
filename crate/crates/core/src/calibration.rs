//! Calibration of the horseshoe global-scale hyperparameters.
//!
//! The global scales `eta_beta`, `eta_gamma`, `eta_delta` are chosen so the
//! horseshoe prior carries the same information as a benchmark spike-and-slab
//! with a given inclusion probability: for each coefficient block we match
//! the prior probabilities of a negligible effect (`|theta| < q_small`) and of
//! a non-large effect (`|theta| < q_large`) by minimizing
//!
//! `g(eta) = [P_hs(q_small|eta) - P_sas(q_small)]^2
//!         + [P_hs(q_large|eta) - P_sas(q_large)]^2`
//!
//! over `log eta` with golden-section search. All probability estimates are
//! Monte Carlo with common random numbers across `eta`, which makes
//! `P_hs(q|eta)` exactly nonincreasing in `eta` and the objective smooth
//! enough for bracketed search. Both probabilities are two-sided: the priors
//! are symmetric and `q` bounds an interval around zero.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::priors::{SLAB_REG_HORSESHOE, SLAB_SPIKE_SLAB};
use crate::rng::{stream_rng, Stream};
use crate::stats;
use crate::{Error, Result};

/// Which horseshoe variant is being calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorseshoeKind {
    Horseshoe,
    RegHorseshoe,
}

/// Calibration inputs for one coefficient block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSpec {
    /// Benchmark spike-and-slab inclusion probability.
    pub phi: f64,
    pub q_small: f64,
    pub q_large: f64,
    pub n_mc: usize,
    /// Search interval for `eta`.
    pub eta_grid: (f64, f64),
    pub seed: u64,
}

impl CalibrationSpec {
    pub fn new(phi: f64, q_small: f64, q_large: f64, seed: u64) -> Self {
        Self { phi, q_small, q_large, n_mc: 1_000_000, eta_grid: (1e-5, 10.0), seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::InvalidInput(format!("phi = {} not in (0,1)", self.phi)));
        }
        if !(0.0 < self.q_small && self.q_small < self.q_large) {
            return Err(Error::InvalidInput(format!(
                "need 0 < q_small < q_large, got ({}, {})",
                self.q_small, self.q_large
            )));
        }
        if self.n_mc < 100_000 {
            return Err(Error::InvalidInput("n_mc must be at least 1e5".into()));
        }
        if !(self.eta_grid.0 > 0.0 && self.eta_grid.0 < self.eta_grid.1) {
            return Err(Error::InvalidInput("eta_grid must be a positive interval".into()));
        }
        Ok(())
    }
}

/// Result of one block calibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub eta: f64,
    pub g_value: f64,
    pub target_small: f64,
    pub target_large: f64,
    pub achieved_small: f64,
    pub achieved_large: f64,
    /// The minimum sat on the search boundary (the returned value is the
    /// boundary itself).
    pub at_boundary: bool,
}

/// Exact two-sided interval probability of the spike-and-slab with a fixed
/// slab width: `P(|theta| < q) = (1-phi) + phi (2 Phi(q/c) - 1)`.
pub fn spike_slab_interval_prob_fixed_width(phi: f64, q: f64, c: f64) -> f64 {
    (1.0 - phi) + phi * (2.0 * stats::normal_cdf(q / c) - 1.0)
}

/// Monte Carlo estimate of `P(|theta| < q)` under the spike-and-slab prior
/// `theta | lambda, c ~ lambda N(0, c^2) + (1-lambda) delta(0)`,
/// `lambda ~ Bern(phi)`, `c^2 ~ InvGamma(0.5, 0.5)`. The normal component is
/// integrated analytically (only the slab width is sampled).
pub fn tail_probs_spike_slab<R: Rng>(phi: f64, q: f64, n_mc: usize, rng: &mut R) -> f64 {
    if q <= 0.0 {
        return 1.0 - phi;
    }
    let (a, b) = SLAB_SPIKE_SLAB;
    let gamma = Gamma::new(a, 1.0 / b).expect("valid slab prior");
    let mut acc = 0.0;
    for _ in 0..n_mc {
        let c = (1.0 / gamma.sample(rng)).sqrt();
        acc += 2.0 * stats::normal_cdf(q / c) - 1.0;
    }
    (1.0 - phi) + phi * acc / n_mc as f64
}

/// Pre-drawn latents shared across `eta` evaluations (common random numbers).
/// `t0` holds `lambda * tau0` products with `tau0 ~ C+(0,1)`, so the scale
/// draw for a given `eta` is `eta * t0`; `c` holds slab widths for the
/// regularized variant.
pub struct CalibrationDraws {
    t0: Vec<f64>,
    c: Vec<f64>,
    kind: HorseshoeKind,
}

impl CalibrationDraws {
    pub fn new<R: Rng>(kind: HorseshoeKind, n_mc: usize, rng: &mut R) -> Self {
        let mut t0 = Vec::with_capacity(n_mc);
        let mut c = Vec::new();
        let (a, b) = SLAB_REG_HORSESHOE;
        let gamma = Gamma::new(a, 1.0 / b).expect("valid slab prior");
        if kind == HorseshoeKind::RegHorseshoe {
            c.reserve(n_mc);
        }
        for _ in 0..n_mc {
            let lambda = stats::half_cauchy_quantile(rng.random(), 1.0);
            let tau0 = stats::half_cauchy_quantile(rng.random(), 1.0);
            t0.push(lambda * tau0);
            if kind == HorseshoeKind::RegHorseshoe {
                c.push((1.0 / gamma.sample(rng)).sqrt());
            }
        }
        Self { t0, c, kind }
    }

    /// `P(|theta| < q)` at global scale `eta`, normal component integrated
    /// analytically.
    pub fn interval_prob(&self, eta: f64, q: f64) -> f64 {
        let mut acc = 0.0;
        match self.kind {
            HorseshoeKind::Horseshoe => {
                for &t in &self.t0 {
                    let s = eta * t;
                    acc += 2.0 * stats::normal_cdf(q / s) - 1.0;
                }
            }
            HorseshoeKind::RegHorseshoe => {
                for (t, c) in self.t0.iter().zip(&self.c) {
                    let tl = eta * t;
                    // effective sd tau*lambda_tilde = c*tl/sqrt(c^2 + tl^2)
                    let s = c * tl / (c * c + tl * tl).sqrt();
                    acc += 2.0 * stats::normal_cdf(q / s) - 1.0;
                }
            }
        }
        acc / self.t0.len() as f64
    }
}

/// Minimize the two-probability criterion for fixed targets; returns
/// `(eta, g, at_boundary)`. Coarse bracket scan over the grid, then
/// golden-section inside the best bracket.
pub fn solve_eta(
    draws: &CalibrationDraws,
    q_small: f64,
    q_large: f64,
    target_small: f64,
    target_large: f64,
    eta_grid: (f64, f64),
) -> (f64, f64, bool) {
    let g = |eta: f64| -> f64 {
        let ps = draws.interval_prob(eta, q_small);
        let pl = draws.interval_prob(eta, q_large);
        (ps - target_small).powi(2) + (pl - target_large).powi(2)
    };
    let (lo, hi) = (eta_grid.0.ln(), eta_grid.1.ln());
    let n_scan = 24;
    let mut best_i = 0;
    let mut best_g = f64::INFINITY;
    let at = |i: usize| lo + (hi - lo) * i as f64 / (n_scan - 1) as f64;
    for i in 0..n_scan {
        let gi = g(at(i).exp());
        if gi < best_g {
            best_g = gi;
            best_i = i;
        }
    }
    let at_boundary = best_i == 0 || best_i == n_scan - 1;
    let (mut a, mut b) = (at(best_i.saturating_sub(1)), at((best_i + 1).min(n_scan - 1)));
    // golden-section on log eta
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = g(c.exp());
    let mut fd = g(d.exp());
    for _ in 0..60 {
        if (b - a).abs() < 1e-6 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = g(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = g(d.exp());
        }
    }
    let eta = (0.5 * (a + b)).exp();
    (eta, g(eta), at_boundary)
}

/// Calibrate one block's global scale against the spike-and-slab benchmark.
pub fn calibrate_eta(spec: &CalibrationSpec, kind: HorseshoeKind) -> Result<CalibrationResult> {
    spec.validate()?;
    let mut rng_targets = stream_rng(spec.seed, Stream::Calibration(0));
    let target_small = tail_probs_spike_slab(spec.phi, spec.q_small, spec.n_mc, &mut rng_targets);
    let target_large = tail_probs_spike_slab(spec.phi, spec.q_large, spec.n_mc, &mut rng_targets);

    let mut rng_draws = stream_rng(spec.seed, Stream::Calibration(1));
    let draws = CalibrationDraws::new(kind, spec.n_mc, &mut rng_draws);
    let (eta, g_value, at_boundary) =
        solve_eta(&draws, spec.q_small, spec.q_large, target_small, target_large, spec.eta_grid);
    Ok(CalibrationResult {
        eta,
        g_value,
        target_small,
        target_large,
        achieved_small: draws.interval_prob(eta, spec.q_small),
        achieved_large: draws.interval_prob(eta, spec.q_large),
        at_boundary,
    })
}

/// Per-block negligible/large-effect thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BlockThresholds {
    pub beta: (f64, f64),
    pub gamma: (f64, f64),
    pub delta: (f64, f64),
}

/// Thresholds from the dose-response guesstimates: 10% and 100% of the
/// guesstimate for the E0 and Emax blocks; fixed `log(1.1)` and `log(2)` for
/// the log-ED50 block (10% and 100% changes need no guesstimate).
pub fn guesstimate_thresholds(e0_star: f64, emax_star: f64) -> Result<BlockThresholds> {
    if e0_star == 0.0 || emax_star == 0.0 {
        return Err(Error::InvalidInput(
            "guesstimates must be nonzero to derive calibration thresholds".into(),
        ));
    }
    Ok(BlockThresholds {
        beta: (0.1 * e0_star.abs(), e0_star.abs()),
        gamma: (0.1 * emax_star.abs(), emax_star.abs()),
        delta: (1.1f64.ln(), 2f64.ln()),
    })
}

/// Calibrate all three blocks; returns `[beta, gamma, delta]` results.
pub fn calibrate_blocks(
    phi: f64,
    thresholds: &BlockThresholds,
    kind: HorseshoeKind,
    n_mc: usize,
    seed: u64,
) -> Result<[CalibrationResult; 3]> {
    let mk = |q: (f64, f64), offset: u64| -> CalibrationSpec {
        CalibrationSpec { n_mc, ..CalibrationSpec::new(phi, q.0, q.1, seed.wrapping_add(offset)) }
    };
    Ok([
        calibrate_eta(&mk(thresholds.beta, 0), kind)?,
        calibrate_eta(&mk(thresholds.gamma, 1), kind)?,
        calibrate_eta(&mk(thresholds.delta, 2), kind)?,
    ])
}
