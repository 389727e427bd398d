//! Spike-and-slab indicator moves.
//!
//! Indicators are updated by a birth/death scan: the add move proposes the
//! group's coefficients from a Gaussian approximation of their conditional
//! posterior (likelihood linearized at zero, which is exact for E0 effects),
//! the drop move zeroes them, and a Barker-form acceptance keeps the joint
//! chain in detailed balance. Predictive moves toggle the Emax and ED50
//! coefficients of a group together, matching the shared predictive
//! indicator. Slab variances get a conjugate inverse-gamma Gibbs update
//! against the active coefficients, with the non-centered coordinates
//! rescaled to keep the coefficient values fixed.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::emax;
use crate::posterior::{IndicatorState, PosteriorModel};
use crate::stats;

/// One indicator position: the prognostic or predictive flag of a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipSlot {
    Prognostic(usize),
    Predictive(usize),
}

/// Gaussian proposal for a group's coefficient block.
struct BlockProposal {
    mean: DVector<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    log_det_precision: f64,
    dim: usize,
}

impl BlockProposal {
    fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        // theta = mean + L^{-T} z has covariance P^{-1}
        let lt = self.chol.l().transpose();
        let x = lt.solve_upper_triangular(&z).expect("triangular solve");
        &self.mean + x
    }

    fn logpdf(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.mean;
        // quadratic form d' P d via the Cholesky factor
        let ltd = self.chol.l().transpose() * &d;
        let quad: f64 = ltd.iter().map(|v| v * v).sum();
        0.5 * self.log_det_precision - 0.5 * self.dim as f64 * stats::LN_2PI - 0.5 * quad
    }
}

/// Per-flip context: likelihood at the zeroed block and the block proposal.
struct FlipContext {
    loglik_zero: f64,
    proposal: BlockProposal,
    /// slab sds per proposal coordinate
    slab_sds: Vec<f64>,
    columns: Vec<usize>,
}

fn build_context(
    model: &PosteriorModel,
    u: &[f64],
    ind: &IndicatorState,
    slab: &[f64; 3],
    slot: FlipSlot,
) -> FlipContext {
    let data = model.data;
    let (g, predictive) = match slot {
        FlipSlot::Prognostic(g) => (g, false),
        FlipSlot::Predictive(g) => (g, true),
    };
    let columns = data.groups()[g].columns.clone();
    let m = columns.len();
    let dim = if predictive { 2 * m } else { m };

    // coefficients with the flip block zeroed
    let mut ind_off = ind.clone();
    if predictive {
        ind_off.pred[g] = false;
    } else {
        ind_off.prog[g] = false;
    }
    let params0 = model.params_from_state(u, &ind_off, slab);
    let coeffs0 = &params0.coeffs;
    let sigma = coeffs0.sigma;
    let inv_var = 1.0 / (sigma * sigma);
    let h = coeffs0.h;

    // residuals and linearized design at the zeroed block
    let n = data.n();
    let mut jac = DMatrix::<f64>::zeros(n, dim);
    let mut resid = DVector::<f64>::zeros(n);
    let mut loglik_zero = 0.0;
    let base = -0.5 * stats::LN_2PI - sigma.ln();
    for i in 0..n {
        let x = data.x_row(i);
        let pp = emax::patient_params(coeffs0, x).expect("finite state in gibbs context");
        let d = data.doses()[i];
        let r = emax::treatment_fraction(d, pp.ed50.ln(), h);
        let mu = pp.e0 + pp.emax * r;
        let e = data.responses()[i] - mu;
        resid[i] = e;
        loglik_zero += base - 0.5 * e * e * inv_var;
        for (c, &j) in columns.iter().enumerate() {
            if predictive {
                jac[(i, c)] = x[j] * r;
                jac[(i, m + c)] = -pp.emax * h * r * (1.0 - r) * x[j];
            } else {
                jac[(i, c)] = x[j];
            }
        }
    }

    let slab_sds: Vec<f64> = if predictive {
        (0..dim).map(|c| if c < m { slab[1] } else { slab[2] }).collect()
    } else {
        vec![slab[0]; dim]
    };

    // precision = J'J/sigma^2 + diag(1/c^2), mean = P^{-1} J'resid/sigma^2
    let mut precision = jac.transpose() * &jac * inv_var;
    for c in 0..dim {
        precision[(c, c)] += 1.0 / (slab_sds[c] * slab_sds[c]);
    }
    let rhs = jac.transpose() * &resid * inv_var;
    let (chol, mean) = match Cholesky::new(precision.clone()) {
        Some(ch) => {
            let mean = ch.solve(&rhs);
            (ch, mean)
        }
        None => {
            // degenerate design: fall back to the slab prior as proposal
            let mut prior_prec = DMatrix::<f64>::zeros(dim, dim);
            for c in 0..dim {
                prior_prec[(c, c)] = 1.0 / (slab_sds[c] * slab_sds[c]);
            }
            let ch = Cholesky::new(prior_prec).expect("diagonal precision");
            (ch, DVector::zeros(dim))
        }
    };
    let log_det_precision = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    FlipContext {
        loglik_zero,
        proposal: BlockProposal { mean, chol, log_det_precision, dim },
        slab_sds,
        columns,
    }
}

/// Log likelihood with the flip block set to `theta`.
fn loglik_with_block(
    model: &PosteriorModel,
    u: &[f64],
    ind: &IndicatorState,
    slab: &[f64; 3],
    slot: FlipSlot,
    columns: &[usize],
    theta: &DVector<f64>,
) -> f64 {
    let mut ind_off = ind.clone();
    let (g, predictive) = match slot {
        FlipSlot::Prognostic(g) => (g, false),
        FlipSlot::Predictive(g) => (g, true),
    };
    if predictive {
        ind_off.pred[g] = false;
    } else {
        ind_off.prog[g] = false;
    }
    let mut params = model.params_from_state(u, &ind_off, slab);
    let m = columns.len();
    for (c, &j) in columns.iter().enumerate() {
        if predictive {
            params.coeffs.gamma[j] = theta[c];
            params.coeffs.delta[j] = theta[m + c];
        } else {
            params.coeffs.beta[j] = theta[c];
        }
    }
    emax::log_likelihood(&params.coeffs, model.data)
}

fn prior_log_odds(model: &PosteriorModel, ind: &IndicatorState, slot: FlipSlot) -> (f64, f64) {
    let spec = model.prior;
    match slot {
        FlipSlot::Prognostic(g) => {
            let phi_star =
                if spec.dependent && ind.pred[g] { spec.phi_inc } else { spec.phi };
            (phi_star.ln(), (1.0 - phi_star).ln())
        }
        FlipSlot::Predictive(g) => {
            let mut lw_on = spec.phi.ln();
            let mut lw_off = (1.0 - spec.phi).ln();
            if spec.dependent {
                // flipping the predictive flag changes the prognostic
                // conditional prior
                let (rho_on, rho_off) = if ind.prog[g] {
                    (spec.phi_inc, spec.phi)
                } else {
                    (1.0 - spec.phi_inc, 1.0 - spec.phi)
                };
                lw_on += rho_on.ln();
                lw_off += rho_off.ln();
            }
            (lw_on, lw_off)
        }
    }
}

fn slab_logpdf(theta: &DVector<f64>, slab_sds: &[f64]) -> f64 {
    theta
        .iter()
        .zip(slab_sds)
        .map(|(t, s)| stats::normal_logpdf(*t, 0.0, *s))
        .sum()
}

/// Probability that the indicator at `slot` ends the move switched on, given
/// everything else: prior odds (with the dependent adjustment when enabled)
/// times the likelihood ratio at the proposed/current block, slab-corrected.
/// For a currently excluded group the block value is drawn from the proposal
/// here, hence the rng.
pub fn inclusion_probability<R: Rng>(
    model: &PosteriorModel,
    u: &[f64],
    ind: &IndicatorState,
    slab: &[f64; 3],
    slot: FlipSlot,
    rng: &mut R,
) -> f64 {
    let (p_on, _theta) = flip_weights(model, u, ind, slab, slot, rng);
    p_on
}

/// Returns `(p_on, candidate)`; the candidate block is the proposal draw for
/// an off-state move (to be installed on acceptance) or the current
/// coefficients for an on-state move.
fn flip_weights<R: Rng>(
    model: &PosteriorModel,
    u: &[f64],
    ind: &IndicatorState,
    slab: &[f64; 3],
    slot: FlipSlot,
    rng: &mut R,
) -> (f64, DVector<f64>) {
    let ctx = build_context(model, u, ind, slab, slot);
    let (g, predictive, currently_on) = match slot {
        FlipSlot::Prognostic(g) => (g, false, ind.prog[g]),
        FlipSlot::Predictive(g) => (g, true, ind.pred[g]),
    };
    let theta = if currently_on {
        // current block values
        let params = model.params_from_state(u, ind, slab);
        let m = ctx.columns.len();
        let mut t = DVector::zeros(ctx.proposal.dim);
        for (c, &j) in ctx.columns.iter().enumerate() {
            if predictive {
                t[c] = params.coeffs.gamma[j];
                t[m + c] = params.coeffs.delta[j];
            } else {
                t[c] = params.coeffs.beta[j];
            }
        }
        t
    } else {
        ctx.proposal.sample(rng)
    };
    let _ = g;
    let (prior_on, prior_off) = prior_log_odds(model, ind, slot);
    let loglik_on = loglik_with_block(model, u, ind, slab, slot, &ctx.columns, &theta);
    let lw_on =
        prior_on + loglik_on + slab_logpdf(&theta, &ctx.slab_sds) - ctx.proposal.logpdf(&theta);
    let lw_off = prior_off + ctx.loglik_zero;
    let p_on = if lw_on == f64::NEG_INFINITY {
        0.0
    } else {
        1.0 / (1.0 + (lw_off - lw_on).exp())
    };
    (p_on, theta)
}

/// One full indicator scan (random order) followed by the conjugate slab
/// update. Mutates the non-centered coordinates in `u` so that recorded
/// coefficients stay consistent.
pub fn spike_slab_sweep<R: Rng>(
    model: &PosteriorModel,
    u: &mut [f64],
    ind: &mut IndicatorState,
    slab: &mut [f64; 3],
    rng: &mut R,
) {
    let k = model.layout.k;
    let mut slots: Vec<FlipSlot> = (0..k)
        .map(FlipSlot::Prognostic)
        .chain((0..k).map(FlipSlot::Predictive))
        .collect();
    slots.shuffle(rng);
    for slot in slots {
        let (p_on, theta) = flip_weights(model, u, ind, slab, slot, rng);
        let switch_on = rng.random::<f64>() < p_on;
        let (g, predictive, currently_on) = match slot {
            FlipSlot::Prognostic(g) => (g, false, ind.prog[g]),
            FlipSlot::Predictive(g) => (g, true, ind.pred[g]),
        };
        let columns = model.data.groups()[g].columns.clone();
        let m = columns.len();
        match (currently_on, switch_on) {
            (false, true) => {
                // birth: install candidate as non-centered coordinates
                for (c, &j) in columns.iter().enumerate() {
                    if predictive {
                        u[model.layout.idx_z(1, j)] = theta[c] / slab[1];
                        u[model.layout.idx_z(2, j)] = theta[m + c] / slab[2];
                    } else {
                        u[model.layout.idx_z(0, j)] = theta[c] / slab[0];
                    }
                }
                set_indicator(ind, slot, true);
            }
            (true, false) => {
                // death: refresh the pseudo coordinates from their prior
                for &j in &columns {
                    if predictive {
                        u[model.layout.idx_z(1, j)] = rng.sample(StandardNormal);
                        u[model.layout.idx_z(2, j)] = rng.sample(StandardNormal);
                    } else {
                        u[model.layout.idx_z(0, j)] = rng.sample(StandardNormal);
                    }
                }
                set_indicator(ind, slot, false);
            }
            (false, false) => {
                // stayed out: independent refresh of the pseudo coordinates
                for &j in &columns {
                    if predictive {
                        u[model.layout.idx_z(1, j)] = rng.sample(StandardNormal);
                        u[model.layout.idx_z(2, j)] = rng.sample(StandardNormal);
                    } else {
                        u[model.layout.idx_z(0, j)] = rng.sample(StandardNormal);
                    }
                }
            }
            (true, true) => {}
        }
    }
    update_slab_widths(model, u, ind, slab, rng);
}

fn set_indicator(ind: &mut IndicatorState, slot: FlipSlot, on: bool) {
    match slot {
        FlipSlot::Prognostic(g) => ind.prog[g] = on,
        FlipSlot::Predictive(g) => ind.pred[g] = on,
    }
}

/// Conjugate update of the slab variances given the active coefficients:
/// `c^2 | theta ~ InvGamma(a + m/2, b + sum theta^2 / 2)`, followed by a
/// rescale of the active non-centered coordinates so coefficients are
/// unchanged.
fn update_slab_widths<R: Rng>(
    model: &PosteriorModel,
    u: &mut [f64],
    ind: &IndicatorState,
    slab: &mut [f64; 3],
    rng: &mut R,
) {
    let (a, b) = model.prior.slab;
    let data = model.data;
    for block in 0..3 {
        let mut active_cols: Vec<usize> = Vec::new();
        for j in 0..data.p() {
            let g = data.group_of(j);
            let on = if block == 0 { ind.prog[g] } else { ind.pred[g] };
            if on {
                active_cols.push(j);
            }
        }
        let mut sum_sq = 0.0;
        for &j in &active_cols {
            let theta = slab[block] * u[model.layout.idx_z(block, j)];
            sum_sq += theta * theta;
        }
        let shape = a + active_cols.len() as f64 / 2.0;
        let rate = b + sum_sq / 2.0;
        let gamma = Gamma::new(shape, 1.0 / rate).expect("valid gamma").sample(rng);
        let c_new = (1.0 / gamma).sqrt();
        for &j in &active_cols {
            let theta = slab[block] * u[model.layout.idx_z(block, j)];
            u[model.layout.idx_z(block, j)] = theta / c_new;
        }
        slab[block] = c_new;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrialDataset;
    use crate::priors::PriorSpec;
    use crate::rng::{stream_rng, Stream};

    fn dataset(n_per_dose: usize, gamma2: f64, seed: u64) -> TrialDataset {
        let mut rng = stream_rng(seed, Stream::Replication(0));
        let doses = [0.0, 12.5, 25.0, 50.0, 100.0];
        let mut all = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for &d in &doses {
            for _ in 0..n_per_dose {
                let x1: f64 = rng.sample(StandardNormal);
                let x2: f64 = rng.sample(StandardNormal);
                let emax = 0.17 + gamma2 * x2;
                let mu = 1.2 + emax * d / (d + 20.0);
                let y = mu + 0.25 * rng.sample::<f64, _>(StandardNormal);
                all.0.push(d);
                all.1.push(y);
                all.2.push(x1);
                all.3.push(x2);
            }
        }
        TrialDataset::new(
            all.0,
            all.1,
            vec![("x1".into(), all.2), ("x2".into(), all.3)],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn flat_likelihood_returns_phi() {
        // enormous sigma makes the likelihood flat: the conditional
        // inclusion probability collapses to the prior phi
        let data = dataset(10, 0.0, 1);
        let prior = PriorSpec::spike_slab(0.2, data.d_max());
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let ind = IndicatorState::all(data.k(), false);
        let mut u = vec![0.0; model.dim()];
        u[crate::posterior::IDX_LOG_SIGMA] = 20.0; // sigma = e^20
        let mut rng = stream_rng(2, Stream::Chain(0));
        let p = inclusion_probability(
            &model,
            &u,
            &ind,
            &[1.0, 1.0, 1.0],
            FlipSlot::Predictive(1),
            &mut rng,
        );
        assert!((p - 0.2).abs() < 1e-6, "p = {p}");
    }

    #[test]
    fn dependent_prior_raises_prognostic_inclusion() {
        let data = dataset(10, 0.0, 3);
        let prior = PriorSpec::spike_slab(0.2, data.d_max()).with_dependent(true);
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let mut ind = IndicatorState::all(data.k(), false);
        ind.pred[0] = true;
        let mut u = vec![0.0; model.dim()];
        u[crate::posterior::IDX_LOG_SIGMA] = 20.0;
        let mut rng = stream_rng(4, Stream::Chain(0));
        let p = inclusion_probability(
            &model,
            &u,
            &ind,
            &[1.0, 1.0, 1.0],
            FlipSlot::Prognostic(0),
            &mut rng,
        );
        assert!((p - 0.8).abs() < 1e-6, "p = {p}");
        // without the predictive flag, back to phi
        ind.pred[0] = false;
        let p = inclusion_probability(
            &model,
            &u,
            &ind,
            &[1.0, 1.0, 1.0],
            FlipSlot::Prognostic(0),
            &mut rng,
        );
        assert!((p - 0.2).abs() < 1e-6, "p = {p}");
    }

    #[test]
    fn strong_signal_is_included_with_near_certainty() {
        // |gamma_2| at 10 prior sds of the response noise scale
        let data = dataset(60, 0.5, 5);
        let prior = PriorSpec::spike_slab(0.2, data.d_max());
        let model = PosteriorModel::new(&data, &prior).unwrap();
        let ind = IndicatorState::all(data.k(), false);
        let mut u = vec![0.0; model.dim()];
        u[crate::posterior::IDX_ALPHA_E0] = 1.2;
        u[crate::posterior::IDX_ALPHA_EMAX] = 0.17;
        // nu such that ED50 = 20: nu = 0.2
        u[crate::posterior::IDX_U_NU] = stats::logit(0.2);
        // h = 1 -> xi = (1-0.5)/9.5
        u[crate::posterior::IDX_U_XI] = stats::logit(0.5 / 9.5);
        u[crate::posterior::IDX_LOG_SIGMA] = 0.25f64.ln();
        let mut rng = stream_rng(6, Stream::Chain(0));
        let p = inclusion_probability(
            &model,
            &u,
            &ind,
            &[1.0, 1.0, 1.0],
            FlipSlot::Predictive(1),
            &mut rng,
        );
        assert!(p > 0.99, "p = {p}");
    }
}
