//! Shrinkage priors on covariate effects: spike-and-slab, horseshoe and
//! regularized horseshoe, each with an optional dependent variant that couples
//! prognostic to predictive inclusion.
//!
//! Structure shared by all families:
//! - one local shrinkage component per covariate *group* (all dummy columns of
//!   a categorical covariate share it),
//! - the predictive local component is shared between the Emax and ED50
//!   effects of a covariate, so a covariate is predictive on both or neither,
//! - per-block global components (`tau` scales for the horseshoes, slab
//!   widths `c` for spike-and-slab and the regularized horseshoe).
//!
//! Slab-width priors are inverse-gamma on the slab *variance* `c^2`
//! (spike-and-slab: InvGamma(0.5, 0.5), i.e. a unit Cauchy slab marginal;
//! regularized horseshoe: InvGamma(2, 2)). Global horseshoe scales are
//! half-Cauchy with scale `eta`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, InverseGamma};

use crate::emax::CoefficientSet;
use crate::stats;
use crate::{Error, Result};

/// Default raised prognostic-inclusion probability for dependent
/// spike-and-slab priors.
pub const PHI_INC_DEFAULT: f64 = 0.8;
/// Weakly informative sd for the E0/Emax intercept priors.
pub const INTERCEPT_PRIOR_SD: f64 = 100.0;
/// Beta hyperprior on `nu` (ED50 placement): Beta(0.82, 3.5).
pub const BETA_NU: (f64, f64) = (0.82, 3.5);
/// Beta hyperprior on `xi` (Hill slope placement): Beta(0.93, 1.4).
pub const BETA_XI: (f64, f64) = (0.93, 1.4);
/// InvGamma(shape, rate) prior on the residual sd `sigma`.
pub const SIGMA_PRIOR: (f64, f64) = (0.01, 0.01);
/// InvGamma prior on the slab variance `c^2` for spike-and-slab blocks.
pub const SLAB_SPIKE_SLAB: (f64, f64) = (0.5, 0.5);
/// InvGamma prior on `c^2` for regularized-horseshoe blocks.
pub const SLAB_REG_HORSESHOE: (f64, f64) = (2.0, 2.0);

/// Prior family on the covariate-effect blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorFamily {
    SpikeSlab,
    Horseshoe,
    RegHorseshoe,
    /// Flat (improper uniform) priors on all coefficients.
    Flat,
    /// All covariate effects fixed at zero.
    Null,
    /// Flat priors restricted to a known support mask.
    OracleMask,
}

impl PriorFamily {
    pub fn is_horseshoe(self) -> bool {
        matches!(self, PriorFamily::Horseshoe | PriorFamily::RegHorseshoe)
    }
}

/// Known support for the oracle family, per covariate group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSupport {
    pub prognostic: Vec<bool>,
    pub predictive: Vec<bool>,
}

/// Complete prior configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSpec {
    pub family: PriorFamily,
    /// Couple prognostic inclusion/shrinkage to the predictive component.
    pub dependent: bool,
    /// Spike-and-slab inclusion probability.
    pub phi: f64,
    /// Raised prognostic inclusion probability when the predictive effect is
    /// in the model (dependent spike-and-slab).
    pub phi_inc: f64,
    /// Global half-Cauchy scales for the horseshoe families.
    pub eta_beta: f64,
    pub eta_gamma: f64,
    pub eta_delta: f64,
    /// InvGamma(shape, rate) on the slab variance `c^2`.
    pub slab: (f64, f64),
    pub beta_nu: (f64, f64),
    pub beta_xi: (f64, f64),
    pub sigma_e0: f64,
    pub sigma_emax: f64,
    /// InvGamma(shape, rate) on sigma.
    pub sigma_prior: (f64, f64),
    /// Maximum dose; `alpha_ED50 = log(nu * d_max)`.
    pub d_max: f64,
    /// Support mask for `PriorFamily::OracleMask`.
    pub oracle: Option<OracleSupport>,
}

impl PriorSpec {
    fn base(family: PriorFamily, d_max: f64) -> Self {
        Self {
            family,
            dependent: false,
            phi: 0.2,
            phi_inc: PHI_INC_DEFAULT,
            eta_beta: 1.0,
            eta_gamma: 1.0,
            eta_delta: 1.0,
            slab: match family {
                PriorFamily::RegHorseshoe => SLAB_REG_HORSESHOE,
                _ => SLAB_SPIKE_SLAB,
            },
            beta_nu: BETA_NU,
            beta_xi: BETA_XI,
            sigma_e0: INTERCEPT_PRIOR_SD,
            sigma_emax: INTERCEPT_PRIOR_SD,
            sigma_prior: SIGMA_PRIOR,
            d_max,
            oracle: None,
        }
    }

    /// Spike-and-slab with inclusion probability `phi` (the common default is
    /// `2/k`).
    pub fn spike_slab(phi: f64, d_max: f64) -> Self {
        Self { phi, ..Self::base(PriorFamily::SpikeSlab, d_max) }
    }

    pub fn horseshoe(eta: (f64, f64, f64), d_max: f64) -> Self {
        Self {
            eta_beta: eta.0,
            eta_gamma: eta.1,
            eta_delta: eta.2,
            ..Self::base(PriorFamily::Horseshoe, d_max)
        }
    }

    pub fn reg_horseshoe(eta: (f64, f64, f64), d_max: f64) -> Self {
        Self {
            eta_beta: eta.0,
            eta_gamma: eta.1,
            eta_delta: eta.2,
            ..Self::base(PriorFamily::RegHorseshoe, d_max)
        }
    }

    pub fn flat(d_max: f64) -> Self {
        Self::base(PriorFamily::Flat, d_max)
    }

    pub fn null(d_max: f64) -> Self {
        Self::base(PriorFamily::Null, d_max)
    }

    pub fn oracle(support: OracleSupport, d_max: f64) -> Self {
        Self { oracle: Some(support), ..Self::base(PriorFamily::OracleMask, d_max) }
    }

    pub fn with_dependent(mut self, dependent: bool) -> Self {
        self.dependent = dependent;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == PriorFamily::SpikeSlab {
            if !(self.phi > 0.0 && self.phi < 1.0) {
                return Err(Error::InvalidInput(format!("phi = {} not in (0,1)", self.phi)));
            }
            if self.dependent && !(self.phi < self.phi_inc && self.phi_inc <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "need phi < phi_inc <= 1, got phi = {}, phi_inc = {}",
                    self.phi, self.phi_inc
                )));
            }
        }
        if self.family.is_horseshoe()
            && !(self.eta_beta > 0.0 && self.eta_gamma > 0.0 && self.eta_delta > 0.0)
        {
            return Err(Error::InvalidInput("all eta scales must be positive".into()));
        }
        if self.family == PriorFamily::OracleMask && self.oracle.is_none() {
            return Err(Error::InvalidInput("oracle family needs a support mask".into()));
        }
        if !(self.d_max > 0.0) {
            return Err(Error::InvalidInput("d_max must be positive".into()));
        }
        Ok(())
    }
}

/// The shrinkage latent state for one MCMC iteration: per-group local
/// components (0/1 indicators for spike-and-slab), per-block globals and slab
/// widths. `lambda_star` is the auxiliary local component of the dependent
/// horseshoe; `lambda_prog = max(lambda_star, lambda_pred)` in that case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageState {
    pub lambda_prog: Vec<f64>,
    pub lambda_pred: Vec<f64>,
    pub lambda_star: Option<Vec<f64>>,
    pub tau_beta: f64,
    pub tau_gamma: f64,
    pub tau_delta: f64,
    pub c_beta: f64,
    pub c_gamma: f64,
    pub c_delta: f64,
}

impl ShrinkageState {
    /// Neutral state (all local/global components 1): what the flat, null and
    /// oracle families carry.
    pub fn neutral(k: usize) -> Self {
        Self {
            lambda_prog: vec![1.0; k],
            lambda_pred: vec![1.0; k],
            lambda_star: None,
            tau_beta: 1.0,
            tau_gamma: 1.0,
            tau_delta: 1.0,
            c_beta: 1.0,
            c_gamma: 1.0,
            c_delta: 1.0,
        }
    }

    /// State with every latent at its prior median; spike-and-slab indicators
    /// start at 0.
    pub fn prior_median(spec: &PriorSpec, k: usize) -> Self {
        let c_med = |slab: (f64, f64)| -> f64 {
            // median of c where c^2 ~ InvGamma(shape, rate)
            InverseGamma::new(slab.0, slab.1).unwrap().inverse_cdf(0.5).sqrt()
        };
        match spec.family {
            PriorFamily::SpikeSlab => Self {
                lambda_prog: vec![0.0; k],
                lambda_pred: vec![0.0; k],
                lambda_star: None,
                tau_beta: 1.0,
                tau_gamma: 1.0,
                tau_delta: 1.0,
                c_beta: c_med(spec.slab),
                c_gamma: c_med(spec.slab),
                c_delta: c_med(spec.slab),
            },
            PriorFamily::Horseshoe | PriorFamily::RegHorseshoe => {
                let c = if spec.family == PriorFamily::RegHorseshoe {
                    c_med(spec.slab)
                } else {
                    1.0
                };
                Self {
                    // half-Cauchy(0,1) median is 1
                    lambda_prog: vec![1.0; k],
                    lambda_pred: vec![1.0; k],
                    lambda_star: spec.dependent.then(|| vec![1.0; k]),
                    tau_beta: spec.eta_beta,
                    tau_gamma: spec.eta_gamma,
                    tau_delta: spec.eta_delta,
                    c_beta: c,
                    c_gamma: c,
                    c_delta: c,
                }
            }
            _ => Self::neutral(k),
        }
    }
}

/// Effective local component of the regularized horseshoe:
/// `lambda_tilde = sqrt(c^2 lambda^2 / (c^2 + tau^2 lambda^2))`.
/// Soft-truncates `tau*lambda_tilde` at the slab width `c`.
pub fn regularized_lambda(lambda: f64, tau: f64, c: f64) -> f64 {
    let t = tau * lambda;
    c * lambda / (c * c + t * t).sqrt()
}

/// Dependent horseshoe coupling: the prognostic local component is the
/// elementwise maximum, so prognostic effects are never shrunk harder than
/// predictive ones.
pub fn dependent_coupling(lambda_star: &[f64], lambda_pred: &[f64]) -> Vec<f64> {
    lambda_star.iter().zip(lambda_pred).map(|(a, b)| a.max(*b)).collect()
}

/// Per-block effective prior sds for the coefficient of a given group.
/// Returns `(s_beta, s_gamma, s_delta)`; flat-prior blocks report 1.
pub fn effective_scales(spec: &PriorSpec, shrink: &ShrinkageState, g: usize) -> (f64, f64, f64) {
    match spec.family {
        PriorFamily::SpikeSlab => (
            shrink.lambda_prog[g] * shrink.c_beta,
            shrink.lambda_pred[g] * shrink.c_gamma,
            shrink.lambda_pred[g] * shrink.c_delta,
        ),
        PriorFamily::Horseshoe => {
            let prog = prog_lambda(spec, shrink, g);
            (
                shrink.tau_beta * prog,
                shrink.tau_gamma * shrink.lambda_pred[g],
                shrink.tau_delta * shrink.lambda_pred[g],
            )
        }
        PriorFamily::RegHorseshoe => {
            let prog = prog_lambda(spec, shrink, g);
            (
                shrink.tau_beta * regularized_lambda(prog, shrink.tau_beta, shrink.c_beta),
                shrink.tau_gamma
                    * regularized_lambda(shrink.lambda_pred[g], shrink.tau_gamma, shrink.c_gamma),
                shrink.tau_delta
                    * regularized_lambda(shrink.lambda_pred[g], shrink.tau_delta, shrink.c_delta),
            )
        }
        PriorFamily::Flat | PriorFamily::Null | PriorFamily::OracleMask => (1.0, 1.0, 1.0),
    }
}

/// The prognostic local component honoring the dependent coupling.
pub fn prog_lambda(spec: &PriorSpec, shrink: &ShrinkageState, g: usize) -> f64 {
    if spec.dependent && spec.family.is_horseshoe() {
        let star = shrink
            .lambda_star
            .as_ref()
            .map(|s| s[g])
            .unwrap_or(shrink.lambda_prog[g]);
        star.max(shrink.lambda_pred[g])
    } else {
        shrink.lambda_prog[g]
    }
}

/// Log density of the coefficient blocks given the shrinkage state (the
/// normal terms with each family's effective scales). Spike-and-slab states
/// with a nonzero coefficient under an excluded indicator are impossible and
/// return `-inf`. `column_group[j]` maps design column `j` to its group.
pub fn coefficient_block_logpdf(
    coeffs: &CoefficientSet,
    shrink: &ShrinkageState,
    spec: &PriorSpec,
    column_group: &[usize],
) -> f64 {
    let p = coeffs.beta.len();
    debug_assert_eq!(column_group.len(), p);
    let mut lp = 0.0;
    for j in 0..p {
        let g = column_group[j];
        let (s_b, s_g, s_d) = effective_scales(spec, shrink, g);
        match spec.family {
            PriorFamily::SpikeSlab => {
                let prog_on = shrink.lambda_prog[g] > 0.0;
                let pred_on = shrink.lambda_pred[g] > 0.0;
                if prog_on {
                    lp += stats::normal_logpdf(coeffs.beta[j], 0.0, s_b);
                } else if coeffs.beta[j] != 0.0 {
                    return f64::NEG_INFINITY;
                }
                if pred_on {
                    lp += stats::normal_logpdf(coeffs.gamma[j], 0.0, s_g);
                    lp += stats::normal_logpdf(coeffs.delta[j], 0.0, s_d);
                } else if coeffs.gamma[j] != 0.0 || coeffs.delta[j] != 0.0 {
                    return f64::NEG_INFINITY;
                }
            }
            PriorFamily::Horseshoe | PriorFamily::RegHorseshoe => {
                lp += stats::normal_logpdf(coeffs.beta[j], 0.0, s_b);
                lp += stats::normal_logpdf(coeffs.gamma[j], 0.0, s_g);
                lp += stats::normal_logpdf(coeffs.delta[j], 0.0, s_d);
            }
            PriorFamily::Flat => {}
            PriorFamily::Null => {
                if coeffs.beta[j] != 0.0 || coeffs.gamma[j] != 0.0 || coeffs.delta[j] != 0.0 {
                    return f64::NEG_INFINITY;
                }
            }
            PriorFamily::OracleMask => {
                let support = spec.oracle.as_ref().expect("oracle support");
                if !support.prognostic[g] && coeffs.beta[j] != 0.0 {
                    return f64::NEG_INFINITY;
                }
                if !support.predictive[g] && (coeffs.gamma[j] != 0.0 || coeffs.delta[j] != 0.0) {
                    return f64::NEG_INFINITY;
                }
            }
        }
    }
    lp
}

/// Log density of the shrinkage latents themselves (Bernoulli indicators,
/// half-Cauchy locals/globals, inverse-gamma slab variances).
pub fn latent_logpdf(shrink: &ShrinkageState, spec: &PriorSpec, k: usize) -> f64 {
    let mut lp = 0.0;
    match spec.family {
        PriorFamily::SpikeSlab => {
            for g in 0..k {
                let pred_on = shrink.lambda_pred[g] > 0.0;
                let prog_on = shrink.lambda_prog[g] > 0.0;
                let phi_pred = spec.phi;
                lp += if pred_on { phi_pred.ln() } else { (1.0 - phi_pred).ln() };
                let phi_star = if spec.dependent && pred_on { spec.phi_inc } else { spec.phi };
                lp += if prog_on { phi_star.ln() } else { (1.0 - phi_star).ln() };
            }
            for c in [shrink.c_beta, shrink.c_gamma, shrink.c_delta] {
                lp += stats::inv_gamma_logpdf(c * c, spec.slab.0, spec.slab.1);
            }
        }
        PriorFamily::Horseshoe | PriorFamily::RegHorseshoe => {
            for g in 0..k {
                lp += stats::half_cauchy_logpdf(shrink.lambda_pred[g], 1.0);
                let second = if spec.dependent {
                    shrink.lambda_star.as_ref().expect("dependent state carries lambda_star")[g]
                } else {
                    shrink.lambda_prog[g]
                };
                lp += stats::half_cauchy_logpdf(second, 1.0);
            }
            lp += stats::half_cauchy_logpdf(shrink.tau_beta, spec.eta_beta);
            lp += stats::half_cauchy_logpdf(shrink.tau_gamma, spec.eta_gamma);
            lp += stats::half_cauchy_logpdf(shrink.tau_delta, spec.eta_delta);
            if spec.family == PriorFamily::RegHorseshoe {
                for c in [shrink.c_beta, shrink.c_gamma, shrink.c_delta] {
                    lp += stats::inv_gamma_logpdf(c * c, spec.slab.0, spec.slab.1);
                }
            }
        }
        _ => {}
    }
    lp
}

/// Joint log density of coefficients and shrinkage latents,
/// `log p(beta, gamma, delta, latents | spec)`.
pub fn coefficient_prior_logpdf(
    coeffs: &CoefficientSet,
    shrink: &ShrinkageState,
    spec: &PriorSpec,
    column_group: &[usize],
) -> f64 {
    let k = shrink.lambda_pred.len();
    coefficient_block_logpdf(coeffs, shrink, spec, column_group)
        + latent_logpdf(shrink, spec, k)
}

/// Exact draws of the coefficient vectors `(beta, gamma, delta)` from the
/// marginal prior, one column per covariate group. Row-major `n_draws x k`.
#[derive(Debug, Clone)]
pub struct PriorDraws {
    pub k: usize,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
}

impl PriorDraws {
    pub fn beta_row(&self, i: usize) -> &[f64] {
        &self.beta[i * self.k..(i + 1) * self.k]
    }
    pub fn gamma_row(&self, i: usize) -> &[f64] {
        &self.gamma[i * self.k..(i + 1) * self.k]
    }
    pub fn delta_row(&self, i: usize) -> &[f64] {
        &self.delta[i * self.k..(i + 1) * self.k]
    }
}

/// Draw a complete shrinkage latent state from the prior.
pub fn sample_shrinkage_state<R: Rng>(spec: &PriorSpec, k: usize, rng: &mut R) -> ShrinkageState {
    let mut state = ShrinkageState::neutral(k);
    match spec.family {
        PriorFamily::SpikeSlab => {
            for g in 0..k {
                let pred: bool = rng.random::<f64>() < spec.phi;
                let phi_star = if spec.dependent && pred { spec.phi_inc } else { spec.phi };
                let prog: bool = rng.random::<f64>() < phi_star;
                state.lambda_pred[g] = pred as u8 as f64;
                state.lambda_prog[g] = prog as u8 as f64;
            }
            state.c_beta = draw_slab_width(spec.slab, rng);
            state.c_gamma = draw_slab_width(spec.slab, rng);
            state.c_delta = draw_slab_width(spec.slab, rng);
        }
        PriorFamily::Horseshoe | PriorFamily::RegHorseshoe => {
            let hc = |rng: &mut R, scale: f64| stats::half_cauchy_quantile(rng.random(), scale);
            for g in 0..k {
                state.lambda_pred[g] = hc(rng, 1.0);
            }
            if spec.dependent {
                let star: Vec<f64> = (0..k).map(|_| hc(rng, 1.0)).collect();
                state.lambda_prog = dependent_coupling(&star, &state.lambda_pred);
                state.lambda_star = Some(star);
            } else {
                for g in 0..k {
                    state.lambda_prog[g] = hc(rng, 1.0);
                }
            }
            state.tau_beta = hc(rng, spec.eta_beta);
            state.tau_gamma = hc(rng, spec.eta_gamma);
            state.tau_delta = hc(rng, spec.eta_delta);
            if spec.family == PriorFamily::RegHorseshoe {
                state.c_beta = draw_slab_width(spec.slab, rng);
                state.c_gamma = draw_slab_width(spec.slab, rng);
                state.c_delta = draw_slab_width(spec.slab, rng);
            }
        }
        _ => {}
    }
    state
}

/// Draw `c` with `c^2 ~ InvGamma(shape, rate)`.
pub fn draw_slab_width<R: Rng>(slab: (f64, f64), rng: &mut R) -> f64 {
    let g = Gamma::new(slab.0, 1.0 / slab.1).expect("valid slab prior").sample(rng);
    (1.0 / g).sqrt()
}

/// i.i.d. draws of `(beta, gamma, delta)` from the marginal prior with `k`
/// singleton covariate groups. Latents are integrated out by composition:
/// draw latents, then coefficients.
pub fn sample_prior<R: Rng>(
    spec: &PriorSpec,
    k: usize,
    rng: &mut R,
    n_draws: usize,
) -> Result<PriorDraws> {
    if n_draws == 0 {
        return Err(Error::InvalidInput("n_draws must be at least 1".into()));
    }
    match spec.family {
        PriorFamily::Flat | PriorFamily::OracleMask => {
            return Err(Error::InvalidInput(
                "flat/oracle priors are improper; no marginal prior draws exist".into(),
            ));
        }
        _ => {}
    }
    let mut draws = PriorDraws {
        k,
        beta: vec![0.0; n_draws * k],
        gamma: vec![0.0; n_draws * k],
        delta: vec![0.0; n_draws * k],
    };
    if spec.family == PriorFamily::Null {
        return Ok(draws);
    }
    for i in 0..n_draws {
        let shrink = sample_shrinkage_state(spec, k, rng);
        for g in 0..k {
            let (s_b, s_g, s_d) = effective_scales(spec, &shrink, g);
            let idx = i * k + g;
            if s_b > 0.0 {
                draws.beta[idx] = s_b * rng.sample::<f64, _>(StandardNormal);
            }
            if s_g > 0.0 {
                draws.gamma[idx] = s_g * rng.sample::<f64, _>(StandardNormal);
                draws.delta[idx] = s_d * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(draws)
}
