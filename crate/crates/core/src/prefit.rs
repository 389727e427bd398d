//! Maximum-likelihood fit of the no-covariate sigmoid Emax model.
//!
//! Used to seed MCMC initialization and to produce the dose-response
//! guesstimates (`E0*`, `Emax*`) that feed prior calibration. The fit is a
//! multi-start quasi-Newton (BFGS) maximization of the Gaussian likelihood
//! over `(E0, Emax, log ED50, logit-scaled h, log sigma)`; the box constraints
//! on ED50, h and sigma are enforced by the transforms.

use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::stats;
use crate::{Error, Result};

/// ML estimates of the reference (no-covariate) dose-response curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrefitEstimates {
    pub e0: f64,
    pub emax: f64,
    pub ed50: f64,
    pub h: f64,
    pub sigma: f64,
    pub log_likelihood: f64,
    pub converged: bool,
}

const H_LO: f64 = 0.5;
const H_SPAN: f64 = 9.5;

struct Objective<'a> {
    doses: &'a [f64],
    ln_doses: Vec<f64>,
    responses: &'a [f64],
}

impl Objective<'_> {
    /// Negative log likelihood and gradient over
    /// `theta = (e0, emax, log_ed50, logit((h-0.5)/9.5), log_sigma)`.
    fn nll_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (e0, emax, l50, t_h, ls) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
        let xi = stats::sigmoid(t_h);
        let h = H_LO + H_SPAN * xi;
        let sigma = ls.exp();
        if !sigma.is_finite() || sigma <= 0.0 {
            return f64::INFINITY;
        }
        let inv_var = 1.0 / (sigma * sigma);
        let n = self.responses.len() as f64;
        let mut nll = n * (0.5 * stats::LN_2PI + ls);
        grad.fill(0.0);
        let mut g_h = 0.0;
        let mut sum_sq = 0.0;
        for i in 0..self.responses.len() {
            let d = self.doses[i];
            let (r, active) = if d > 0.0 {
                (stats::sigmoid(h * (self.ln_doses[i] - l50)), true)
            } else {
                (0.0, false)
            };
            let e = self.responses[i] - (e0 + emax * r);
            nll += 0.5 * e * e * inv_var;
            sum_sq += e * e;
            let w = e * inv_var;
            grad[0] -= w;
            if active {
                grad[1] -= w * r;
                let rr = r * (1.0 - r);
                grad[2] += w * emax * h * rr;
                g_h -= w * emax * rr * (self.ln_doses[i] - l50);
            }
        }
        grad[3] = g_h * H_SPAN * xi * (1.0 - xi);
        grad[4] = n - sum_sq * inv_var;
        nll
    }

    fn rss(&self, theta: &[f64]) -> f64 {
        let (e0, emax, l50, t_h) = (theta[0], theta[1], theta[2], theta[3]);
        let h = H_LO + H_SPAN * stats::sigmoid(t_h);
        let mut rss = 0.0;
        for i in 0..self.responses.len() {
            let d = self.doses[i];
            let r = if d > 0.0 { stats::sigmoid(h * (self.ln_doses[i] - l50)) } else { 0.0 };
            let e = self.responses[i] - (e0 + emax * r);
            rss += e * e;
        }
        rss
    }
}

struct BfgsOutcome {
    theta: Vec<f64>,
    nll: f64,
    converged: bool,
}

/// Dense BFGS with Armijo backtracking. Stops on a small gradient, a
/// perfect-fit residual floor, or line-search collapse.
fn bfgs<F: Fn(&[f64], &mut [f64]) -> f64>(
    f: F,
    perfect_fit: impl Fn(&[f64]) -> bool,
    x0: Vec<f64>,
    max_iter: usize,
) -> Option<BfgsOutcome> {
    let d = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; d];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return None;
    }
    let mut h_inv = nalgebra::DMatrix::<f64>::identity(d, d);
    let mut converged = false;
    for _ in 0..max_iter {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < 1e-9 * (1.0 + fx.abs()) || perfect_fit(&x) {
            converged = true;
            break;
        }
        let gv = nalgebra::DVector::from_column_slice(&g);
        let dir = -(&h_inv * &gv);
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // lost curvature; reset
            h_inv = nalgebra::DMatrix::identity(d, d);
            continue;
        }
        let mut alpha = 1.0;
        let mut xn = vec![0.0; d];
        let mut gn = vec![0.0; d];
        let mut ok = false;
        for _ in 0..50 {
            for i in 0..d {
                xn[i] = x[i] + alpha * dir[i];
            }
            let fn_ = f(&xn, &mut gn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * alpha * slope {
                let s: Vec<f64> = (0..d).map(|i| xn[i] - x[i]).collect();
                let y: Vec<f64> = (0..d).map(|i| gn[i] - g[i]).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                if sy > 1e-12 {
                    let rho = 1.0 / sy;
                    let sv = nalgebra::DVector::from_column_slice(&s);
                    let yv = nalgebra::DVector::from_column_slice(&y);
                    let i_m = nalgebra::DMatrix::<f64>::identity(d, d);
                    let left = &i_m - rho * &sv * yv.transpose();
                    let right = &i_m - rho * &yv * sv.transpose();
                    h_inv = &left * &h_inv * &right + rho * &sv * sv.transpose();
                }
                if (fx - fn_).abs() < 1e-13 * (1.0 + fx.abs()) {
                    converged = true;
                }
                x.copy_from_slice(&xn);
                g.copy_from_slice(&gn);
                fx = fn_;
                ok = true;
                break;
            }
            alpha *= 0.5;
        }
        if !ok || converged {
            break;
        }
    }
    Some(BfgsOutcome { theta: x, nll: fx, converged })
}

/// Fit the no-covariate sigmoid Emax model by maximum likelihood.
pub fn fit_emax_ml(data: &TrialDataset) -> Result<PrefitEstimates> {
    if data.n() < 5 {
        return Err(Error::InvalidInput("insufficient data for pre-fit (need n >= 5)".into()));
    }
    let obj = Objective {
        doses: data.doses(),
        ln_doses: data.doses().iter().map(|&d| if d > 0.0 { d.ln() } else { 0.0 }).collect(),
        responses: data.responses(),
    };
    let n = data.n() as f64;

    let mean_placebo = data.mean_response_at(0.0);
    let mean_top = data.mean_response_at(data.d_max());
    let e0_start = mean_placebo;
    let emax_start = mean_top - mean_placebo;
    let resp_sd = stats::sample_sd(data.responses()).max(1e-3);

    let med_active = stats::median(data.active_doses());
    let ed50_starts = [med_active, data.d_max() / 8.0, data.d_max() / 2.0];
    let h_starts = [1.0, 2.5];

    let mut best: Option<BfgsOutcome> = None;
    for &ed50_0 in &ed50_starts {
        for &h_0 in &h_starts {
            let theta0 = vec![
                e0_start,
                emax_start,
                ed50_0.max(1e-6).ln(),
                stats::logit(((h_0 - H_LO) / H_SPAN).clamp(0.02, 0.98)),
                resp_sd.ln(),
            ];
            let outcome =
                bfgs(|x, g| obj.nll_grad(x, g), |x| obj.rss(x) < 1e-22 * n, theta0, 500);
            if let Some(o) = outcome {
                if o.nll.is_finite() && best.as_ref().map_or(true, |b| o.nll < b.nll) {
                    best = Some(o);
                }
            }
        }
    }

    let Some(best) = best else {
        return Err(Error::Numerical(
            "pre-fit failed: no start produced a finite likelihood".into(),
        ));
    };
    let theta = &best.theta;
    let rss = obj.rss(theta);
    Ok(PrefitEstimates {
        e0: theta[0],
        emax: theta[1],
        ed50: theta[2].exp(),
        h: H_LO + H_SPAN * stats::sigmoid(theta[3]),
        sigma: (rss / n).sqrt(),
        log_likelihood: -best.nll,
        converged: best.converged,
    })
}
