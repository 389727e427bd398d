//! Joint log posterior on unconstrained coordinates, with analytic gradients.
//!
//! Continuous coordinates and their transforms:
//! - `alpha_e0`, `alpha_emax`: identity,
//! - `nu`, `xi` (placing `alpha_ED50 = log(nu*d_max)` and `h = 0.5 + 9.5*xi`):
//!   logit transforms with Beta-prior Jacobians,
//! - `sigma` and all positive shrinkage latents (`lambda`, `tau`, `c`): log
//!   transforms,
//! - coefficients: non-centered, `beta_j = z_j * s_g(j)` where `s` is the
//!   family's effective prior scale for the column's group. Flat-prior
//!   families use `z` as the coefficient itself.
//!
//! Spike-and-slab indicators are discrete and held fixed here; excluded
//! coefficients are exactly zero and their `z` coordinates keep a standard
//! normal distribution so the continuous state has fixed dimension across
//! indicator flips. Slab widths for spike-and-slab live outside the
//! Hamiltonian state (they get a conjugate Gibbs update between transitions).

use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::emax::CoefficientSet;
use crate::priors::{self, PriorFamily, PriorSpec, ShrinkageState};
use crate::stats;
use crate::{Error, Result};

/// Indices of the always-present core coordinates.
pub const IDX_ALPHA_E0: usize = 0;
pub const IDX_ALPHA_EMAX: usize = 1;
pub const IDX_U_NU: usize = 2;
pub const IDX_U_XI: usize = 3;
pub const IDX_LOG_SIGMA: usize = 4;
const N_CORE: usize = 5;

/// Inclusion state per covariate group. For spike-and-slab these are the
/// sampled indicators; for other families they are structural (all on for
/// flat/horseshoe, all off for null, the support mask for oracle).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorState {
    pub prog: Vec<bool>,
    pub pred: Vec<bool>,
}

impl IndicatorState {
    pub fn all(k: usize, on: bool) -> Self {
        Self { prog: vec![on; k], pred: vec![on; k] }
    }

    pub fn for_family(spec: &PriorSpec, k: usize) -> Self {
        match spec.family {
            PriorFamily::Null => Self::all(k, false),
            PriorFamily::SpikeSlab => Self::all(k, false),
            PriorFamily::OracleMask => {
                let support = spec.oracle.as_ref().expect("oracle support");
                Self { prog: support.prognostic.clone(), pred: support.predictive.clone() }
            }
            _ => Self::all(k, true),
        }
    }
}

/// Coordinate layout of the unconstrained state for one prior family.
#[derive(Debug, Clone)]
pub struct StateLayout {
    pub k: usize,
    pub p: usize,
    family: PriorFamily,
    lambda_pred0: Option<usize>,
    lambda_second0: Option<usize>,
    tau0: Option<usize>,
    c0: Option<usize>,
    z0: Option<usize>,
    pub dim: usize,
}

impl StateLayout {
    pub fn new(spec: &PriorSpec, k: usize, p: usize) -> Self {
        let mut dim = N_CORE;
        let (mut lambda_pred0, mut lambda_second0, mut tau0, mut c0, mut z0) =
            (None, None, None, None, None);
        if spec.family.is_horseshoe() {
            lambda_pred0 = Some(dim);
            dim += k;
            lambda_second0 = Some(dim);
            dim += k;
            tau0 = Some(dim);
            dim += 3;
            if spec.family == PriorFamily::RegHorseshoe {
                c0 = Some(dim);
                dim += 3;
            }
        }
        if p > 0 && spec.family != PriorFamily::Null {
            z0 = Some(dim);
            dim += 3 * p;
        }
        Self { k, p, family: spec.family, lambda_pred0, lambda_second0, tau0, c0, z0, dim }
    }

    pub fn idx_lambda_pred(&self, g: usize) -> usize {
        self.lambda_pred0.expect("family has no horseshoe latents") + g
    }

    /// Second local block: `log lambda_prog` for independent horseshoes,
    /// `log lambda_star` for dependent ones.
    pub fn idx_lambda_second(&self, g: usize) -> usize {
        self.lambda_second0.expect("family has no horseshoe latents") + g
    }

    /// `b`: 0 = beta, 1 = gamma, 2 = delta.
    pub fn idx_log_tau(&self, b: usize) -> usize {
        self.tau0.expect("family has no global scales") + b
    }

    pub fn idx_log_c(&self, b: usize) -> usize {
        self.c0.expect("family has no slab coordinates") + b
    }

    pub fn idx_z(&self, block: usize, j: usize) -> usize {
        self.z0.expect("family has no coefficients") + block * self.p + j
    }

    pub fn has_coefficients(&self) -> bool {
        self.z0.is_some()
    }

    pub fn has_hs_latents(&self) -> bool {
        self.lambda_pred0.is_some()
    }

    pub fn has_slab_coords(&self) -> bool {
        self.c0.is_some()
    }

    fn z_has_normal_prior(&self) -> bool {
        !matches!(self.family, PriorFamily::Flat | PriorFamily::OracleMask)
    }
}

/// The model seen by the sampler: data, prior and coordinate layout bound
/// together, with cached per-patient log doses.
pub struct PosteriorModel<'a> {
    pub data: &'a TrialDataset,
    pub prior: &'a PriorSpec,
    pub layout: StateLayout,
    ln_doses: Vec<f64>,
    ln_d_max: f64,
}

/// Full parameter state on the constrained scale for one MCMC iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub coeffs: CoefficientSet,
    pub shrink: ShrinkageState,
    pub nu: f64,
    pub xi: f64,
}

/// Scratch buffers so the hot path does not allocate.
pub struct EvalScratch {
    beta: Vec<f64>,
    gamma: Vec<f64>,
    delta: Vec<f64>,
    g_beta: Vec<f64>,
    g_gamma: Vec<f64>,
    g_delta: Vec<f64>,
    s_beta: Vec<f64>,
    s_gamma: Vec<f64>,
    s_delta: Vec<f64>,
}

impl EvalScratch {
    pub fn new(p: usize, k: usize) -> Self {
        Self {
            beta: vec![0.0; p],
            gamma: vec![0.0; p],
            delta: vec![0.0; p],
            g_beta: vec![0.0; p],
            g_gamma: vec![0.0; p],
            g_delta: vec![0.0; p],
            s_beta: vec![0.0; k],
            s_gamma: vec![0.0; k],
            s_delta: vec![0.0; k],
        }
    }
}

impl<'a> PosteriorModel<'a> {
    pub fn new(data: &'a TrialDataset, prior: &'a PriorSpec) -> Result<Self> {
        prior.validate()?;
        if let Some(support) = &prior.oracle {
            if support.prognostic.len() != data.k() || support.predictive.len() != data.k() {
                return Err(Error::InvalidInput(format!(
                    "oracle mask has {} groups, data has {}",
                    support.prognostic.len(),
                    data.k()
                )));
            }
        }
        let layout = StateLayout::new(prior, data.k(), data.p());
        let ln_doses = data.doses().iter().map(|&d| if d > 0.0 { d.ln() } else { 0.0 }).collect();
        Ok(Self { data, prior, layout, ln_doses, ln_d_max: data.d_max().ln() })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn scratch(&self) -> EvalScratch {
        EvalScratch::new(self.layout.p, self.layout.k)
    }

    /// Joint log density (up to a constant) and gradient at the unconstrained
    /// state `u`, conditional on the indicators and (spike-and-slab) slab
    /// widths. Returns `NEG_INFINITY` with an unspecified gradient for
    /// invalid/overflowed states.
    pub fn log_density_grad(
        &self,
        u: &[f64],
        ind: &IndicatorState,
        slab: &[f64; 3],
        grad: &mut [f64],
        scratch: &mut EvalScratch,
    ) -> f64 {
        debug_assert_eq!(u.len(), self.layout.dim);
        debug_assert_eq!(grad.len(), self.layout.dim);
        grad.fill(0.0);

        let spec = self.prior;
        let lay = &self.layout;
        let (k, p) = (lay.k, lay.p);

        // --- core parameters ---------------------------------------------
        let alpha_e0 = u[IDX_ALPHA_E0];
        let alpha_emax = u[IDX_ALPHA_EMAX];
        let u_nu = u[IDX_U_NU];
        let u_xi = u[IDX_U_XI];
        let log_sigma = u[IDX_LOG_SIGMA];
        let nu = stats::sigmoid(u_nu);
        let xi = stats::sigmoid(u_xi);
        let sigma = log_sigma.exp();
        let h = 0.5 + 9.5 * xi;
        // alpha_ED50 = log(nu * d_max), computed in log space
        let alpha_ed50 = ln_sigmoid(u_nu) + self.ln_d_max;
        if !(sigma.is_finite() && sigma > 0.0 && alpha_ed50.is_finite()) {
            return f64::NEG_INFINITY;
        }

        // --- shrinkage latents and effective scales ----------------------
        // per group: effective scales and d(log s)/d(log latent) factors
        let mut lambda_pred = vec![0.0f64; if lay.has_hs_latents() { k } else { 0 }];
        let mut lambda_second = vec![0.0f64; lambda_pred.len()];
        let mut taus = [0.0f64; 3];
        let mut cs = [0.0f64; 3];
        if lay.has_hs_latents() {
            for g in 0..k {
                lambda_pred[g] = u[lay.idx_lambda_pred(g)].exp();
                lambda_second[g] = u[lay.idx_lambda_second(g)].exp();
                if !(lambda_pred[g].is_finite() && lambda_second[g].is_finite()) {
                    return f64::NEG_INFINITY;
                }
            }
            for b in 0..3 {
                taus[b] = u[lay.idx_log_tau(b)].exp();
                if !taus[b].is_finite() {
                    return f64::NEG_INFINITY;
                }
            }
            if lay.has_slab_coords() {
                for b in 0..3 {
                    cs[b] = u[lay.idx_log_c(b)].exp();
                    if !cs[b].is_finite() {
                        return f64::NEG_INFINITY;
                    }
                }
            }
        }

        // effective scale per group per block, plus chain factors
        // ds_dlam[g][b] = d(log s_b)/d(log lambda_used), ds_dtau, ds_dc
        let mut ds_dlam = vec![[0.0f64; 3]; if lay.has_hs_latents() { k } else { 0 }];
        let mut ds_dtau = vec![[0.0f64; 3]; ds_dlam.len()];
        let mut ds_dc = vec![[0.0f64; 3]; ds_dlam.len()];
        // which coordinate receives the prognostic lambda gradient:
        // true -> lambda_second (star/prog), false -> lambda_pred
        let mut prog_routes_to_second = vec![true; ds_dlam.len()];

        for g in 0..k {
            let (s_b, s_g, s_d) = match spec.family {
                PriorFamily::SpikeSlab => (
                    if ind.prog[g] { slab[0] } else { 0.0 },
                    if ind.pred[g] { slab[1] } else { 0.0 },
                    if ind.pred[g] { slab[2] } else { 0.0 },
                ),
                PriorFamily::Horseshoe | PriorFamily::RegHorseshoe => {
                    let lam_prog_eff = if spec.dependent {
                        if lambda_second[g] >= lambda_pred[g] {
                            prog_routes_to_second[g] = true;
                            lambda_second[g]
                        } else {
                            prog_routes_to_second[g] = false;
                            lambda_pred[g]
                        }
                    } else {
                        lambda_second[g]
                    };
                    if spec.family == PriorFamily::Horseshoe {
                        ds_dlam[g] = [1.0, 1.0, 1.0];
                        ds_dtau[g] = [1.0, 1.0, 1.0];
                        (taus[0] * lam_prog_eff, taus[1] * lambda_pred[g], taus[2] * lambda_pred[g])
                    } else {
                        let mut s = [0.0f64; 3];
                        for b in 0..3 {
                            let lam = if b == 0 { lam_prog_eff } else { lambda_pred[g] };
                            let t = taus[b] * lam;
                            let c2 = cs[b] * cs[b];
                            let d = c2 + t * t;
                            s[b] = cs[b] * t / d.sqrt();
                            ds_dlam[g][b] = c2 / d;
                            ds_dtau[g][b] = c2 / d;
                            ds_dc[g][b] = t * t / d;
                        }
                        (s[0], s[1], s[2])
                    }
                }
                PriorFamily::Flat | PriorFamily::OracleMask | PriorFamily::Null => (
                    if ind.prog[g] { 1.0 } else { 0.0 },
                    if ind.pred[g] { 1.0 } else { 0.0 },
                    if ind.pred[g] { 1.0 } else { 0.0 },
                ),
            };
            if !(s_b.is_finite() && s_g.is_finite() && s_d.is_finite()) {
                return f64::NEG_INFINITY;
            }
            scratch.s_beta[g] = s_b;
            scratch.s_gamma[g] = s_g;
            scratch.s_delta[g] = s_d;
        }

        // --- materialize coefficients ------------------------------------
        for j in 0..p {
            let g = self.data.group_of(j);
            if lay.has_coefficients() {
                scratch.beta[j] = u[lay.idx_z(0, j)] * scratch.s_beta[g];
                scratch.gamma[j] = u[lay.idx_z(1, j)] * scratch.s_gamma[g];
                scratch.delta[j] = u[lay.idx_z(2, j)] * scratch.s_delta[g];
            } else {
                scratch.beta[j] = 0.0;
                scratch.gamma[j] = 0.0;
                scratch.delta[j] = 0.0;
            }
        }

        // --- likelihood and its gradient ----------------------------------
        scratch.g_beta.fill(0.0);
        scratch.g_gamma.fill(0.0);
        scratch.g_delta.fill(0.0);
        let inv_var = 1.0 / (sigma * sigma);
        let base = -0.5 * stats::LN_2PI - log_sigma;
        let mut ll = 0.0;
        let mut g_alpha_e0 = 0.0;
        let mut g_alpha_emax = 0.0;
        let mut g_alpha_ed50 = 0.0;
        let mut g_h = 0.0;
        let mut sum_sq = 0.0;
        let n = self.data.n();
        let doses = self.data.doses();
        let responses = self.data.responses();
        for i in 0..n {
            let x = self.data.x_row(i);
            let mut e0 = alpha_e0;
            let mut em = alpha_emax;
            let mut l = alpha_ed50;
            for j in 0..p {
                e0 += x[j] * scratch.beta[j];
                em += x[j] * scratch.gamma[j];
                l += x[j] * scratch.delta[j];
            }
            let (r, active) = if doses[i] > 0.0 {
                (stats::sigmoid(h * (self.ln_doses[i] - l)), true)
            } else {
                (0.0, false)
            };
            let mu = e0 + em * r;
            if !mu.is_finite() {
                return f64::NEG_INFINITY;
            }
            let e = responses[i] - mu;
            ll += base - 0.5 * e * e * inv_var;
            sum_sq += e * e;
            let w = e * inv_var;
            g_alpha_e0 += w;
            for j in 0..p {
                scratch.g_beta[j] += w * x[j];
            }
            if active {
                g_alpha_emax += w * r;
                let rr = r * (1.0 - r);
                let gl = -w * em * h * rr;
                g_alpha_ed50 += gl;
                g_h += w * em * rr * (self.ln_doses[i] - l);
                for j in 0..p {
                    scratch.g_gamma[j] += w * r * x[j];
                    scratch.g_delta[j] += gl * x[j];
                }
            }
        }
        if !ll.is_finite() {
            return f64::NEG_INFINITY;
        }

        let mut lp = ll;

        // --- core priors ---------------------------------------------------
        // intercepts
        let ze0 = alpha_e0 / spec.sigma_e0;
        let zem = alpha_emax / spec.sigma_emax;
        lp += -0.5 * ze0 * ze0 - 0.5 * zem * zem;
        grad[IDX_ALPHA_E0] = g_alpha_e0 - ze0 / spec.sigma_e0;
        grad[IDX_ALPHA_EMAX] = g_alpha_emax - zem / spec.sigma_emax;

        // nu: Beta prior plus logit Jacobian, expressed directly in u
        let (a_nu, b_nu) = spec.beta_nu;
        lp += a_nu * ln_sigmoid(u_nu) + b_nu * ln_sigmoid(-u_nu);
        grad[IDX_U_NU] = g_alpha_ed50 * (1.0 - nu) + a_nu * (1.0 - nu) - b_nu * nu;

        // xi likewise; h = 0.5 + 9.5 xi
        let (a_xi, b_xi) = spec.beta_xi;
        lp += a_xi * ln_sigmoid(u_xi) + b_xi * ln_sigmoid(-u_xi);
        grad[IDX_U_XI] = g_h * 9.5 * xi * (1.0 - xi) + a_xi * (1.0 - xi) - b_xi * xi;

        // sigma: InvGamma(a, b) on sigma, log transform
        let (a_s, b_s) = spec.sigma_prior;
        lp += -(a_s + 1.0) * log_sigma - b_s / sigma + log_sigma;
        grad[IDX_LOG_SIGMA] = (sum_sq * inv_var - n as f64) - a_s + b_s / sigma;

        // --- coefficient priors and chain rule to z / latents -------------
        if lay.has_coefficients() {
            let z_normal = lay.z_has_normal_prior();
            for j in 0..p {
                let g = self.data.group_of(j);
                let active_prog = ind.prog[g];
                let active_pred = ind.pred[g];
                for (block, active, s_g, coef_grad) in [
                    (0usize, active_prog, scratch.s_beta[g], scratch.g_beta[j]),
                    (1, active_pred, scratch.s_gamma[g], scratch.g_gamma[j]),
                    (2, active_pred, scratch.s_delta[g], scratch.g_delta[j]),
                ] {
                    let zi = lay.idx_z(block, j);
                    let z = u[zi];
                    let mut gz = 0.0;
                    if active && s_g > 0.0 {
                        gz += coef_grad * s_g;
                    }
                    // oracle/flat active coefficients have flat priors;
                    // everything else keeps z ~ N(0,1) (incl. pseudo coords)
                    if z_normal || !active {
                        lp += -0.5 * z * z;
                        gz += -z;
                    }
                    grad[zi] = gz;
                }
            }
        }

        // --- shrinkage latent priors and likelihood chain ------------------
        if lay.has_hs_latents() {
            // coefficient-gradient contributions, summed per group/block:
            // d(LL)/d(log latent) = sum_j g_coef_j * coef_j * dlogs
            for j in 0..p {
                let g = self.data.group_of(j);
                let gb = scratch.g_beta[j] * scratch.beta[j];
                let gg = scratch.g_gamma[j] * scratch.gamma[j];
                let gd = scratch.g_delta[j] * scratch.delta[j];
                // beta block: prognostic lambda
                let prog_idx = if spec.dependent && !prog_routes_to_second[g] {
                    lay.idx_lambda_pred(g)
                } else {
                    lay.idx_lambda_second(g)
                };
                grad[prog_idx] += gb * ds_dlam[g][0];
                grad[lay.idx_lambda_pred(g)] += gg * ds_dlam[g][1] + gd * ds_dlam[g][2];
                grad[lay.idx_log_tau(0)] += gb * ds_dtau[g][0];
                grad[lay.idx_log_tau(1)] += gg * ds_dtau[g][1];
                grad[lay.idx_log_tau(2)] += gd * ds_dtau[g][2];
                if lay.has_slab_coords() {
                    grad[lay.idx_log_c(0)] += gb * ds_dc[g][0];
                    grad[lay.idx_log_c(1)] += gg * ds_dc[g][1];
                    grad[lay.idx_log_c(2)] += gd * ds_dc[g][2];
                }
            }
            // half-Cauchy(0,1) locals on log scale
            for g in 0..k {
                for (lam, idx) in [
                    (lambda_pred[g], lay.idx_lambda_pred(g)),
                    (lambda_second[g], lay.idx_lambda_second(g)),
                ] {
                    let l2 = lam * lam;
                    lp += lam.ln() - l2.ln_1p();
                    grad[idx] += 1.0 - 2.0 * l2 / (1.0 + l2);
                }
            }
            // half-Cauchy(0, eta) globals
            for (b, eta) in [(0, spec.eta_beta), (1, spec.eta_gamma), (2, spec.eta_delta)] {
                let t = taus[b] / eta;
                let t2 = t * t;
                lp += taus[b].ln() - t2.ln_1p();
                grad[lay.idx_log_tau(b)] += 1.0 - 2.0 * t2 / (1.0 + t2);
            }
            // slab variances c^2 ~ InvGamma(a, b), on log c
            if lay.has_slab_coords() {
                let (a_c, b_c) = spec.slab;
                for b in 0..3 {
                    let c2 = cs[b] * cs[b];
                    lp += -2.0 * a_c * cs[b].ln() - b_c / c2;
                    grad[lay.idx_log_c(b)] += -2.0 * a_c + 2.0 * b_c / c2;
                }
            }
        }

        // spike-and-slab: indicator and slab terms are constants w.r.t. u but
        // belong to the joint density at fixed indicators
        if spec.family == PriorFamily::SpikeSlab {
            for g in 0..k {
                let phi_pred = spec.phi;
                lp += if ind.pred[g] { phi_pred.ln() } else { (1.0 - phi_pred).ln() };
                let phi_star =
                    if spec.dependent && ind.pred[g] { spec.phi_inc } else { spec.phi };
                lp += if ind.prog[g] { phi_star.ln() } else { (1.0 - phi_star).ln() };
            }
            let (a_c, b_c) = spec.slab;
            for c in slab {
                lp += stats::inv_gamma_logpdf(c * c, a_c, b_c);
            }
        }

        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        lp
    }

    /// Convenience wrapper without gradient.
    pub fn log_density(&self, u: &[f64], ind: &IndicatorState, slab: &[f64; 3]) -> f64 {
        let mut grad = vec![0.0; self.layout.dim];
        let mut scratch = self.scratch();
        self.log_density_grad(u, ind, slab, &mut grad, &mut scratch)
    }

    /// Materialize the constrained-scale parameters at a sampler state.
    pub fn params_from_state(
        &self,
        u: &[f64],
        ind: &IndicatorState,
        slab: &[f64; 3],
    ) -> ModelParameters {
        let lay = &self.layout;
        let spec = self.prior;
        let (k, p) = (lay.k, lay.p);
        let nu = stats::sigmoid(u[IDX_U_NU]);
        let xi = stats::sigmoid(u[IDX_U_XI]);
        let mut shrink = ShrinkageState::neutral(k);
        if lay.has_hs_latents() {
            for g in 0..k {
                shrink.lambda_pred[g] = u[lay.idx_lambda_pred(g)].exp();
            }
            let second: Vec<f64> = (0..k).map(|g| u[lay.idx_lambda_second(g)].exp()).collect();
            if spec.dependent {
                shrink.lambda_prog = priors::dependent_coupling(&second, &shrink.lambda_pred);
                shrink.lambda_star = Some(second);
            } else {
                shrink.lambda_prog = second;
            }
            shrink.tau_beta = u[lay.idx_log_tau(0)].exp();
            shrink.tau_gamma = u[lay.idx_log_tau(1)].exp();
            shrink.tau_delta = u[lay.idx_log_tau(2)].exp();
            if lay.has_slab_coords() {
                shrink.c_beta = u[lay.idx_log_c(0)].exp();
                shrink.c_gamma = u[lay.idx_log_c(1)].exp();
                shrink.c_delta = u[lay.idx_log_c(2)].exp();
            }
        } else if spec.family == PriorFamily::SpikeSlab {
            for g in 0..k {
                shrink.lambda_prog[g] = ind.prog[g] as u8 as f64;
                shrink.lambda_pred[g] = ind.pred[g] as u8 as f64;
            }
            shrink.c_beta = slab[0];
            shrink.c_gamma = slab[1];
            shrink.c_delta = slab[2];
        } else {
            for g in 0..k {
                shrink.lambda_prog[g] = ind.prog[g] as u8 as f64;
                shrink.lambda_pred[g] = ind.pred[g] as u8 as f64;
            }
        }

        let mut coeffs = CoefficientSet::intercepts_only(
            u[IDX_ALPHA_E0],
            u[IDX_ALPHA_EMAX],
            ln_sigmoid(u[IDX_U_NU]) + self.ln_d_max,
            0.5 + 9.5 * xi,
            u[IDX_LOG_SIGMA].exp(),
            p,
        );
        if lay.has_coefficients() {
            for j in 0..p {
                let g = self.data.group_of(j);
                let (s_b, s_g, s_d) = self.scales_at(&shrink, ind, slab, g);
                coeffs.beta[j] = if ind.prog[g] { u[lay.idx_z(0, j)] * s_b } else { 0.0 };
                coeffs.gamma[j] = if ind.pred[g] { u[lay.idx_z(1, j)] * s_g } else { 0.0 };
                coeffs.delta[j] = if ind.pred[g] { u[lay.idx_z(2, j)] * s_d } else { 0.0 };
            }
        }
        ModelParameters { coeffs, shrink, nu, xi }
    }

    fn scales_at(
        &self,
        shrink: &ShrinkageState,
        ind: &IndicatorState,
        slab: &[f64; 3],
        g: usize,
    ) -> (f64, f64, f64) {
        match self.prior.family {
            PriorFamily::SpikeSlab => (
                if ind.prog[g] { slab[0] } else { 0.0 },
                if ind.pred[g] { slab[1] } else { 0.0 },
                if ind.pred[g] { slab[2] } else { 0.0 },
            ),
            PriorFamily::Flat | PriorFamily::OracleMask | PriorFamily::Null => (
                if ind.prog[g] { 1.0 } else { 0.0 },
                if ind.pred[g] { 1.0 } else { 0.0 },
                if ind.pred[g] { 1.0 } else { 0.0 },
            ),
            _ => priors::effective_scales(self.prior, shrink, g),
        }
    }

    /// Inverse of [`params_from_state`]. Fails for impossible states
    /// (nonzero coefficient under an excluded indicator).
    pub fn state_from_params(
        &self,
        params: &ModelParameters,
    ) -> Result<(Vec<f64>, IndicatorState, [f64; 3])> {
        let lay = &self.layout;
        let spec = self.prior;
        let (k, p) = (lay.k, lay.p);
        let mut u = vec![0.0; lay.dim];
        u[IDX_ALPHA_E0] = params.coeffs.alpha_e0;
        u[IDX_ALPHA_EMAX] = params.coeffs.alpha_emax;
        u[IDX_U_NU] = stats::logit(params.nu);
        u[IDX_U_XI] = stats::logit(params.xi);
        u[IDX_LOG_SIGMA] = params.coeffs.sigma.ln();

        let ind = match spec.family {
            PriorFamily::SpikeSlab => IndicatorState {
                prog: params.shrink.lambda_prog.iter().map(|&l| l > 0.0).collect(),
                pred: params.shrink.lambda_pred.iter().map(|&l| l > 0.0).collect(),
            },
            _ => IndicatorState::for_family(spec, k),
        };
        let slab = [params.shrink.c_beta, params.shrink.c_gamma, params.shrink.c_delta];

        if lay.has_hs_latents() {
            for g in 0..k {
                u[lay.idx_lambda_pred(g)] = params.shrink.lambda_pred[g].ln();
                let second = if spec.dependent {
                    params
                        .shrink
                        .lambda_star
                        .as_ref()
                        .ok_or_else(|| {
                            Error::InvalidInput(
                                "dependent horseshoe state needs lambda_star".into(),
                            )
                        })?[g]
                } else {
                    params.shrink.lambda_prog[g]
                };
                u[lay.idx_lambda_second(g)] = second.ln();
            }
            u[lay.idx_log_tau(0)] = params.shrink.tau_beta.ln();
            u[lay.idx_log_tau(1)] = params.shrink.tau_gamma.ln();
            u[lay.idx_log_tau(2)] = params.shrink.tau_delta.ln();
            if lay.has_slab_coords() {
                u[lay.idx_log_c(0)] = params.shrink.c_beta.ln();
                u[lay.idx_log_c(1)] = params.shrink.c_gamma.ln();
                u[lay.idx_log_c(2)] = params.shrink.c_delta.ln();
            }
        }

        if lay.has_coefficients() {
            for j in 0..p {
                let g = self.data.group_of(j);
                let (s_b, s_g, s_d) = self.scales_at(&params.shrink, &ind, &slab, g);
                for (block, coef, active, s) in [
                    (0usize, params.coeffs.beta[j], ind.prog[g], s_b),
                    (1, params.coeffs.gamma[j], ind.pred[g], s_g),
                    (2, params.coeffs.delta[j], ind.pred[g], s_d),
                ] {
                    if !active || s == 0.0 {
                        if coef != 0.0 {
                            return Err(Error::InvalidInput(format!(
                                "coefficient {coef} nonzero under excluded indicator (column {j})"
                            )));
                        }
                        u[lay.idx_z(block, j)] = 0.0;
                    } else {
                        u[lay.idx_z(block, j)] = coef / s;
                    }
                }
            }
        }
        Ok((u, ind, slab))
    }
}

/// Joint log density (up to a constant) and its gradient with respect to all
/// continuous unconstrained coordinates at the given constrained-scale state.
/// Spike-and-slab indicators are conditioned on (held fixed).
pub fn log_posterior_and_grad(
    state: &ModelParameters,
    data: &TrialDataset,
    prior: &PriorSpec,
) -> Result<(f64, Vec<f64>)> {
    let model = PosteriorModel::new(data, prior)?;
    let (u, ind, slab) = model.state_from_params(state)?;
    let mut grad = vec![0.0; model.dim()];
    let mut scratch = model.scratch();
    let lp = model.log_density_grad(&u, &ind, &slab, &mut grad, &mut scratch);
    Ok((lp, grad))
}

/// `log(sigmoid(x))`, stable for large |x|.
fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;

    use super::tests_support::small_dataset as test_dataset;

    pub(crate) fn random_u<R: Rng>(model: &PosteriorModel, rng: &mut R) -> Vec<f64> {
        let mut u: Vec<f64> = (0..model.dim()).map(|_| rng.random::<f64>() * 1.6 - 0.8).collect();
        // keep dependent-horseshoe states away from the max() kink
        if model.layout.has_hs_latents() && model.prior.dependent {
            for g in 0..model.layout.k {
                let a = model.layout.idx_lambda_pred(g);
                let b = model.layout.idx_lambda_second(g);
                if (u[a] - u[b]).abs() < 1e-2 {
                    u[b] += 0.05;
                }
            }
        }
        u
    }

    pub(crate) fn check_gradient(model: &PosteriorModel, u: &[f64]) {
        let ind = IndicatorState::for_family(model.prior, model.layout.k);
        check_gradient_with(model, u, &ind, &[1.0, 1.0, 1.0]);
    }

    pub(crate) fn check_gradient_with(
        model: &PosteriorModel,
        u: &[f64],
        ind: &IndicatorState,
        slab: &[f64; 3],
    ) {
        let mut grad = vec![0.0; model.dim()];
        let mut scratch = model.scratch();
        let lp = model.log_density_grad(u, ind, slab, &mut grad, &mut scratch);
        assert!(lp.is_finite(), "log density not finite at test state");
        let h = 1e-5;
        let mut up = u.to_vec();
        for i in 0..model.dim() {
            up[i] = u[i] + h;
            let fp = model.log_density(&up, ind, slab);
            up[i] = u[i] - h;
            let fm = model.log_density(&up, ind, slab);
            up[i] = u[i];
            let fd = (fp - fm) / (2.0 * h);
            let err = (grad[i] - fd).abs() / grad[i].abs().max(1.0);
            assert!(
                err < 1e-4,
                "coordinate {i}: analytic {} vs fd {fd} (rel err {err:.2e})",
                grad[i]
            );
        }
    }

    #[test]
    fn gradient_matches_fd_reg_horseshoe() {
        let data = test_dataset(40, 1);
        let prior = PriorSpec::reg_horseshoe((0.03, 0.006, 0.026), data.d_max());
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let mut rng = stream_rng(5, Stream::Init(0));
        for _ in 0..5 {
            let u = random_u(&model, &mut rng);
            check_gradient(&model, &u);
        }
    }

    #[test]
    fn gradient_matches_fd_dependent_horseshoe() {
        let data = test_dataset(40, 2);
        let prior = PriorSpec::horseshoe((0.1, 0.1, 0.1), data.d_max()).with_dependent(true);
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let mut rng = stream_rng(6, Stream::Init(1));
        for _ in 0..5 {
            let u = random_u(&model, &mut rng);
            check_gradient(&model, &u);
        }
    }

    #[test]
    fn gradient_matches_fd_spike_slab_mixed_indicators() {
        let data = test_dataset(40, 3);
        let prior = PriorSpec::spike_slab(0.3, data.d_max()).with_dependent(true);
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let mut rng = stream_rng(7, Stream::Init(2));
        let ind = IndicatorState { prog: vec![true, false], pred: vec![false, true] };
        let slab = [0.9, 1.3, 0.6];
        for _ in 0..5 {
            let u = random_u(&model, &mut rng);
            check_gradient_with(&model, &u, &ind, &slab);
        }
    }

    #[test]
    fn flat_prior_alpha_gradient_is_gaussian_identity() {
        // with flat priors the alpha_E0 gradient is sum(y - mu)/sigma^2
        let data = test_dataset(30, 4);
        let mut prior = PriorSpec::flat(data.d_max());
        prior.sigma_e0 = f64::INFINITY;
        prior.sigma_emax = f64::INFINITY;
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let mut rng = stream_rng(8, Stream::Init(3));
        let u = random_u(&model, &mut rng);
        let ind = IndicatorState::for_family(&prior, data.k());
        let mut grad = vec![0.0; model.dim()];
        let mut scratch = model.scratch();
        model.log_density_grad(&u, &ind, &[1.0; 3], &mut grad, &mut scratch);

        let params = model.params_from_state(&u, &ind, &[1.0; 3]);
        let mut expect = 0.0;
        for i in 0..data.n() {
            let pp = crate::emax::patient_params(&params.coeffs, data.x_row(i)).unwrap();
            let mu = crate::emax::emax_mean(&pp, data.doses()[i]);
            expect += (data.responses()[i] - mu) / (params.coeffs.sigma * params.coeffs.sigma);
        }
        assert!(
            (grad[IDX_ALPHA_E0] - expect).abs() < 1e-8 * expect.abs().max(1.0),
            "{} vs {expect}",
            grad[IDX_ALPHA_E0]
        );
    }

    #[test]
    fn state_round_trip() {
        let data = test_dataset(25, 5);
        let prior = PriorSpec::reg_horseshoe((0.1, 0.1, 0.1), data.d_max()).with_dependent(true);
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let mut rng = stream_rng(9, Stream::Init(4));
        let u = random_u(&model, &mut rng);
        let ind = IndicatorState::for_family(&prior, data.k());
        let params = model.params_from_state(&u, &ind, &[1.0; 3]);
        let (u2, _, _) = model.state_from_params(&params).unwrap();
        for (a, b) in u.iter().zip(&u2) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn impossible_spike_state_is_rejected() {
        let data = test_dataset(25, 6);
        let prior = PriorSpec::spike_slab(0.2, data.d_max());
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let ind = IndicatorState::all(data.k(), false);
        let u = vec![0.0; model.dim()];
        let mut params = model.params_from_state(&u, &ind, &[1.0; 3]);
        params.coeffs.gamma[0] = 0.5;
        assert!(model.state_from_params(&params).is_err());
    }

    /// Sign-based per-coordinate ascent (Rprop), independent of any library
    /// optimizer; used as the mode oracle. Handles the poor conditioning
    /// across coordinate scales.
    fn climb_to_mode(model: &PosteriorModel, mut u: Vec<f64>) -> Vec<f64> {
        let ind = IndicatorState::for_family(model.prior, model.layout.k);
        let slab = [1.0, 1.0, 1.0];
        let d = model.dim();
        let mut grad = vec![0.0; d];
        let mut scratch = model.scratch();
        let mut steps = vec![1e-3f64; d];
        let mut prev_grad = vec![0.0; d];
        let mut best_lp = model.log_density_grad(&u, &ind, &slab, &mut grad, &mut scratch);
        let mut best_u = u.clone();
        for _ in 0..50_000 {
            for i in 0..d {
                if grad[i] * prev_grad[i] > 0.0 {
                    steps[i] = (steps[i] * 1.2).min(1.0);
                } else if grad[i] * prev_grad[i] < 0.0 {
                    steps[i] *= 0.5;
                }
                u[i] += steps[i] * grad[i].signum();
            }
            prev_grad.copy_from_slice(&grad);
            let lp = model.log_density_grad(&u, &ind, &slab, &mut grad, &mut scratch);
            if lp > best_lp {
                best_lp = lp;
                best_u.copy_from_slice(&u);
            }
            if grad.iter().all(|g| g.abs() < 1e-8) || steps.iter().all(|s| *s < 1e-12) {
                break;
            }
        }

        // Newton polish with a finite-difference Hessian of the gradient
        let mut u = best_u;
        let fd = 1e-5;
        for _ in 0..25 {
            let lp = model.log_density_grad(&u, &ind, &slab, &mut grad, &mut scratch);
            assert!(lp.is_finite());
            if grad.iter().all(|g| g.abs() < 1e-10) {
                break;
            }
            let mut hess = nalgebra::DMatrix::<f64>::zeros(d, d);
            let mut gp = vec![0.0; d];
            let mut gm = vec![0.0; d];
            let mut up = u.clone();
            for i in 0..d {
                up[i] = u[i] + fd;
                model.log_density_grad(&up, &ind, &slab, &mut gp, &mut scratch);
                up[i] = u[i] - fd;
                model.log_density_grad(&up, &ind, &slab, &mut gm, &mut scratch);
                up[i] = u[i];
                for j in 0..d {
                    hess[(i, j)] = (gp[j] - gm[j]) / (2.0 * fd);
                }
            }
            let g = nalgebra::DVector::from_column_slice(&grad);
            let Some(step) = hess.lu().solve(&g) else { break };
            for i in 0..d {
                u[i] -= step[i];
            }
        }
        u
    }

    #[test]
    fn gradient_vanishes_at_mode() {
        let data = test_dataset(60, 21);
        let prior = PriorSpec::null(data.d_max());
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let mut rng = stream_rng(77, Stream::Init(9));
        let u0 = random_u(&model, &mut rng);
        let mode = climb_to_mode(&model, u0);
        let ind = IndicatorState::for_family(&prior, data.k());
        let mut grad = vec![0.0; model.dim()];
        let mut scratch = model.scratch();
        let lp = model.log_density_grad(&mode, &ind, &[1.0; 3], &mut grad, &mut scratch);
        assert!(lp.is_finite());
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm at mode: {norm:.2e}");
    }

    #[test]
    fn log_posterior_and_grad_entry_point() {
        let data = test_dataset(25, 7);
        let prior = PriorSpec::horseshoe((0.1, 0.1, 0.1), data.d_max());
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let mut rng = stream_rng(10, Stream::Init(5));
        let u = random_u(&model, &mut rng);
        let ind = IndicatorState::for_family(&prior, data.k());
        let params = model.params_from_state(&u, &ind, &[1.0; 3]);
        let (lp, grad) = log_posterior_and_grad(&params, &data, &prior).unwrap();
        assert!(lp.is_finite());
        assert_eq!(grad.len(), model.dim());
        assert!((lp - model.log_density(&u, &ind, &[1.0; 3])).abs() < 1e-10);
    }
}
