//! Posterior sampling engine.
//!
//! Continuous coordinates are updated by dynamic-trajectory Hamiltonian
//! transitions with dual-averaging step-size adaptation and diagonal
//! mass-matrix estimation during warmup. Spike-and-slab models run an
//! alternating scan: an indicator Gibbs sweep (plus conjugate slab update),
//! then a Hamiltonian update conditional on the indicators. Everything is
//! deterministic given `(seed, config, data)`.

pub mod adapt;
pub mod diagnostics;
pub mod gibbs;
pub mod nuts;

use std::cell::RefCell;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateGroup, TrialDataset};
use crate::posterior::{EvalScratch, IndicatorState, ModelParameters, PosteriorModel};
use crate::prefit;
use crate::priors::{PriorFamily, PriorSpec, ShrinkageState};
use crate::rng::{stream_rng, Stream};
use crate::stats;
use crate::{Error, Result};

use adapt::{DualAveraging, WarmupSchedule, Welford};
use nuts::{LogDensity, NutsOptions};

/// Sampler configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub max_treedepth: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            target_accept: 0.95,
            max_treedepth: 10,
            seed: 0,
        }
    }
}

/// Per-parameter and per-run convergence diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Split R-hat per parameter (NaN where undefined).
    pub rhat: Vec<f64>,
    /// Rank-normalized bulk ESS per parameter.
    pub ess_bulk: Vec<f64>,
    pub divergences: usize,
    pub accept_mean: f64,
    pub step_sizes: Vec<f64>,
    pub max_depth_hits: usize,
}

/// Post-warmup draws on the constrained scale plus bookkeeping.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub param_names: Vec<String>,
    pub n_chains: usize,
    pub n_kept: usize,
    /// Row-major (n_chains * n_kept) x D, chain-major order.
    pub draws: Vec<f64>,
    pub chain_ids: Vec<u16>,
    pub iters: Vec<u32>,
    pub energies: Vec<f64>,
    pub diagnostics: Option<Diagnostics>,
    pub groups: Vec<CovariateGroup>,
    /// Design-matrix column names (maps group columns to parameter names).
    pub group_column_names: Vec<String>,
    pub d_max: f64,
    pub dose_levels: Vec<f64>,
    pub seed: u64,
}

impl PosteriorSamples {
    pub fn n_rows(&self) -> usize {
        self.n_chains * self.n_kept
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn idx(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.draws[row * self.dim() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.value(r, col)).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.idx(name).map(|c| self.column(c))
    }

    /// Per-chain view of one parameter.
    fn chain_columns(&self, col: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.n_kept); self.n_chains];
        for row in 0..self.n_rows() {
            out[self.chain_ids[row] as usize].push(self.value(row, col));
        }
        out
    }

    /// Write draws as CSV: `chain,iter,<param...>`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "chain,iter")?;
        for name in &self.param_names {
            write!(f, ",{name}")?;
        }
        writeln!(f)?;
        for row in 0..self.n_rows() {
            write!(f, "{},{}", self.chain_ids[row], self.iters[row])?;
            for col in 0..self.dim() {
                write!(f, ",{}", self.value(row, col))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }

    /// Reload draws written by [`Self::write_csv`]; group structure and dose
    /// metadata come from the dataset.
    pub fn from_csv<P: AsRef<Path>>(path: P, data: &TrialDataset) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref())
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.as_ref().display())))?;
        let headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
        if headers.len() < 3 || headers[0] != "chain" || headers[1] != "iter" {
            return Err(Error::Data("posterior CSV must start with chain,iter columns".into()));
        }
        let param_names: Vec<String> = headers[2..].to_vec();
        let mut chain_ids = Vec::new();
        let mut iters = Vec::new();
        let mut draws = Vec::new();
        for record in reader.records() {
            let record = record?;
            chain_ids.push(
                record[0].parse::<u16>().map_err(|e| Error::Data(format!("bad chain id: {e}")))?,
            );
            iters.push(
                record[1].parse::<u32>().map_err(|e| Error::Data(format!("bad iter: {e}")))?,
            );
            for v in record.iter().skip(2) {
                draws.push(
                    v.parse::<f64>().map_err(|e| Error::Data(format!("bad draw value: {e}")))?,
                );
            }
        }
        if chain_ids.is_empty() {
            return Err(Error::Data("posterior CSV has no draws".into()));
        }
        let n_chains = (*chain_ids.iter().max().unwrap() as usize) + 1;
        let n_kept = chain_ids.len() / n_chains;
        Ok(Self {
            param_names,
            n_chains,
            n_kept,
            draws,
            chain_ids,
            iters,
            energies: Vec::new(),
            diagnostics: None,
            groups: data.groups().to_vec(),
            group_column_names: data.column_names().to_vec(),
            d_max: data.d_max(),
            dose_levels: data.dose_levels().to_vec(),
            seed: 0,
        })
    }

    /// Diagnostics sidecar as JSON (non-finite values flattened to null).
    pub fn write_diagnostics_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let diag = self
            .diagnostics
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("no diagnostics computed".into()))?;
        let to_opt = |v: &[f64]| -> Vec<Option<f64>> {
            v.iter().map(|x| if x.is_finite() { Some(*x) } else { None }).collect()
        };
        let body = serde_json::json!({
            "params": self.param_names,
            "rhat": to_opt(&diag.rhat),
            "ess_bulk": to_opt(&diag.ess_bulk),
            "divergences": diag.divergences,
            "accept_mean": diag.accept_mean,
            "step_sizes": diag.step_sizes,
            "max_depth_hits": diag.max_depth_hits,
            "chains": self.n_chains,
            "draws_per_chain": self.n_kept,
            "seed": self.seed,
        });
        std::fs::write(path, serde_json::to_string_pretty(&body)?)?;
        Ok(())
    }
}

/// Split R-hat and rank-normalized bulk ESS per parameter.
/// Errors with fewer than 2 chains or fewer than 50 draws per chain.
pub fn compute_diagnostics(samples: &PosteriorSamples) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.n_chains < 2 {
        return Err(Error::InvalidInput(
            "R-hat needs at least 2 chains; got a single chain".into(),
        ));
    }
    if samples.n_kept < 50 {
        return Err(Error::InvalidInput("diagnostics need at least 50 draws per chain".into()));
    }
    let mut rhat = Vec::with_capacity(samples.dim());
    let mut ess = Vec::with_capacity(samples.dim());
    for col in 0..samples.dim() {
        let chains = samples.chain_columns(col);
        let views: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        rhat.push(diagnostics::split_rhat(&views));
        ess.push(diagnostics::ess_bulk(&views));
    }
    Ok((rhat, ess))
}

/// Draw-column names for a model (constrained scale).
pub fn draw_names(model: &PosteriorModel) -> Vec<String> {
    let mut names = vec![
        "alpha_e0".to_string(),
        "alpha_emax".to_string(),
        "ed50".to_string(),
        "h".to_string(),
        "sigma".to_string(),
        "nu".to_string(),
        "xi".to_string(),
    ];
    let spec = model.prior;
    let groups = model.data.groups();
    match spec.family {
        PriorFamily::Horseshoe | PriorFamily::RegHorseshoe => {
            for g in groups {
                names.push(format!("lambda_pred_{}", g.name));
            }
            for g in groups {
                names.push(format!("lambda_prog_{}", g.name));
            }
            names.extend(["tau_beta".into(), "tau_gamma".into(), "tau_delta".into()]);
            if spec.family == PriorFamily::RegHorseshoe {
                names.extend(["c_beta".into(), "c_gamma".into(), "c_delta".into()]);
            }
        }
        PriorFamily::SpikeSlab => {
            for g in groups {
                names.push(format!("ind_pred_{}", g.name));
            }
            for g in groups {
                names.push(format!("ind_prog_{}", g.name));
            }
            names.extend(["c_beta".into(), "c_gamma".into(), "c_delta".into()]);
        }
        _ => {}
    }
    if model.layout.has_coefficients() {
        let cols = model.data.column_names();
        for c in cols {
            names.push(format!("beta_{c}"));
        }
        for c in cols {
            names.push(format!("gamma_{c}"));
        }
        for c in cols {
            names.push(format!("delta_{c}"));
        }
    }
    names
}

fn write_draw_row(model: &PosteriorModel, params: &ModelParameters, out: &mut Vec<f64>) {
    let c = &params.coeffs;
    out.extend_from_slice(&[
        c.alpha_e0,
        c.alpha_emax,
        c.alpha_log_ed50.exp(),
        c.h,
        c.sigma,
        params.nu,
        params.xi,
    ]);
    let spec = model.prior;
    let k = model.layout.k;
    match spec.family {
        PriorFamily::Horseshoe | PriorFamily::RegHorseshoe => {
            out.extend_from_slice(&params.shrink.lambda_pred);
            for g in 0..k {
                out.push(crate::priors::prog_lambda(spec, &params.shrink, g));
            }
            out.extend_from_slice(&[
                params.shrink.tau_beta,
                params.shrink.tau_gamma,
                params.shrink.tau_delta,
            ]);
            if spec.family == PriorFamily::RegHorseshoe {
                out.extend_from_slice(&[
                    params.shrink.c_beta,
                    params.shrink.c_gamma,
                    params.shrink.c_delta,
                ]);
            }
        }
        PriorFamily::SpikeSlab => {
            out.extend_from_slice(&params.shrink.lambda_pred);
            out.extend_from_slice(&params.shrink.lambda_prog);
            out.extend_from_slice(&[
                params.shrink.c_beta,
                params.shrink.c_gamma,
                params.shrink.c_delta,
            ]);
        }
        _ => {}
    }
    if model.layout.has_coefficients() {
        out.extend_from_slice(&c.beta);
        out.extend_from_slice(&c.gamma);
        out.extend_from_slice(&c.delta);
    }
}

/// Data summaries feeding initialization; the pre-fit runs once per dataset.
struct InitBase {
    prefit: Option<prefit::PrefitEstimates>,
    mean_placebo: f64,
    emax_heuristic: f64,
    median_active: f64,
    resp_sd: f64,
}

impl InitBase {
    fn from_data(data: &TrialDataset) -> Self {
        let mean_placebo = data.mean_response_at(0.0);
        let emax_heuristic = data.mean_response_at(data.d_max()) - mean_placebo;
        // a pre-fit that ran off the flat ED50/Emax ridge (ED50 far above the
        // top dose, Emax far outside the response range) is useless as a
        // starting point; treat it like a failed pre-fit
        let resp_range = data
            .responses()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
        let span = (resp_range.1 - resp_range.0).max(1e-6);
        let prefit = prefit::fit_emax_ml(data).ok().filter(|p| {
            p.sigma.is_finite()
                && p.sigma > 0.0
                && p.ed50 <= 10.0 * data.d_max()
                && p.emax.abs() <= 10.0 * span
                && p.e0.abs() <= resp_range.1.abs().max(resp_range.0.abs()) + 10.0 * span
        });
        Self {
            prefit,
            mean_placebo,
            emax_heuristic,
            median_active: stats::median(data.active_doses()),
            resp_sd: stats::sample_sd(data.responses()).max(1e-3),
        }
    }

    fn draw<R: Rng>(&self, data: &TrialDataset, prior: &PriorSpec, rng: &mut R) -> ModelParameters {
        let (e0, emax, ed50, h, sigma) = match &self.prefit {
            Some(p) => (p.e0, p.emax, p.ed50, p.h, p.sigma.max(1e-3)),
            None => {
                (self.mean_placebo, self.emax_heuristic, self.median_active, 1.0, self.resp_sd)
            }
        };
        let mut jit = || rng.random::<f64>() - 0.5;
        let alpha_e0 = e0 + jit();
        let alpha_emax = emax + jit();
        let nu0 = (ed50 / data.d_max()).clamp(0.005, 0.995);
        let nu = stats::sigmoid(stats::logit(nu0) + jit());
        let xi0 = ((h - 0.5) / 9.5).clamp(0.01, 0.99);
        let xi = stats::sigmoid(stats::logit(xi0) + jit());
        let sigma = (sigma.ln() + jit()).exp();
        let shrink = ShrinkageState::prior_median(prior, data.k());
        let coeffs = crate::emax::CoefficientSet::intercepts_only(
            alpha_e0,
            alpha_emax,
            (nu * data.d_max()).ln(),
            0.5 + 9.5 * xi,
            sigma,
            data.p(),
        );
        ModelParameters { coeffs, shrink, nu, xi }
    }
}

/// Initial state: intercepts from a jittered least-squares Emax pre-fit (or
/// response-scale heuristics when the pre-fit fails), coefficients at zero,
/// shrinkage latents at their prior medians, indicators all off.
pub fn initialize<R: Rng>(
    data: &TrialDataset,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<ModelParameters> {
    prior.validate()?;
    Ok(InitBase::from_data(data).draw(data, prior, rng))
}

/// Adapter exposing the conditional posterior as a [`LogDensity`].
struct CondTarget<'m, 'a> {
    model: &'m PosteriorModel<'a>,
    ind: &'m IndicatorState,
    slab: [f64; 3],
    scratch: &'m RefCell<EvalScratch>,
}

impl LogDensity for CondTarget<'_, '_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        self.model.log_density_grad(q, self.ind, &self.slab, grad, &mut self.scratch.borrow_mut())
    }
}

struct ChainRun {
    rows: Vec<f64>,
    energies: Vec<f64>,
    divergences: usize,
    accept_sum: f64,
    step_size: f64,
    max_depth_hits: usize,
}

fn run_chain(
    model: &PosteriorModel,
    cfg: &SamplerConfig,
    chain_idx: usize,
    base: &InitBase,
) -> Result<ChainRun> {
    let mut rng = stream_rng(cfg.seed, Stream::Chain(chain_idx as u64));
    let dim = model.dim();
    let scratch = RefCell::new(model.scratch());
    let is_spike_slab = model.prior.family == PriorFamily::SpikeSlab;

    // initialization with re-draws until the density is finite
    let mut attempt = 0;
    let (mut u, mut ind, mut slab) = loop {
        let params = base.draw(model.data, model.prior, &mut rng);
        if let Ok((u, ind, slab)) = model.state_from_params(&params) {
            let target = CondTarget { model, ind: &ind, slab, scratch: &scratch };
            let mut grad = vec![0.0; dim];
            if target.log_density_grad(&u, &mut grad).is_finite() {
                break (u, ind, slab);
            }
        }
        attempt += 1;
        if attempt >= 100 {
            return Err(Error::Sampler(
                "initialization failure: no finite initial density after 100 re-draws".into(),
            ));
        }
    };

    let opts = NutsOptions { max_treedepth: cfg.max_treedepth };
    let mut inv_mass = vec![1.0; dim];
    let mut grad = vec![0.0; dim];

    let eps0 = {
        let target = CondTarget { model, ind: &ind, slab, scratch: &scratch };
        nuts::find_reasonable_step_size(&target, &u, &inv_mass, &mut rng)
    };
    let mut da = DualAveraging::new(eps0, cfg.target_accept);
    let schedule = WarmupSchedule::new(cfg.warmup);
    let mut welford = Welford::new(dim);
    let mut any_ok = cfg.warmup == 0;

    for it in 0..cfg.warmup {
        if is_spike_slab {
            gibbs::spike_slab_sweep(model, &mut u, &mut ind, &mut slab, &mut rng);
        }
        let target = CondTarget { model, ind: &ind, slab, scratch: &scratch };
        let logp = target.log_density_grad(&u, &mut grad);
        if !logp.is_finite() {
            return Err(Error::Sampler("non-finite density during warmup".into()));
        }
        let t =
            nuts::transition(&target, &u, logp, &grad, da.current(), &inv_mass, &opts, &mut rng);
        u = t.q;
        any_ok |= !t.divergent;
        da.update(t.accept_stat);
        if schedule.in_slow_window(it) {
            welford.add(&u);
        }
        if schedule.window_ends_at(it) && welford.count() >= 10 {
            inv_mass = welford.regularized_variance();
            welford.reset();
            let e = nuts::find_reasonable_step_size(&target, &u, &inv_mass, &mut rng);
            da.restart(e);
        }
    }
    if !any_ok {
        return Err(Error::Sampler("all warmup transitions diverged".into()));
    }

    let eps = if cfg.warmup > 0 { da.adapted() } else { da.current() };
    let n_cols = draw_names(model).len();
    let mut rows = Vec::with_capacity(cfg.draws * n_cols);
    let mut energies = Vec::with_capacity(cfg.draws);
    let mut divergences = 0;
    let mut accept_sum = 0.0;
    let mut max_depth_hits = 0;
    for _ in 0..cfg.draws {
        if is_spike_slab {
            gibbs::spike_slab_sweep(model, &mut u, &mut ind, &mut slab, &mut rng);
        }
        let target = CondTarget { model, ind: &ind, slab, scratch: &scratch };
        let logp = target.log_density_grad(&u, &mut grad);
        if !logp.is_finite() {
            return Err(Error::Sampler("non-finite density during sampling".into()));
        }
        let t = nuts::transition(&target, &u, logp, &grad, eps, &inv_mass, &opts, &mut rng);
        u = t.q;
        divergences += t.divergent as usize;
        accept_sum += t.accept_stat;
        max_depth_hits += (t.depth >= cfg.max_treedepth) as usize;
        energies.push(t.energy);
        let params = model.params_from_state(&u, &ind, &slab);
        write_draw_row(model, &params, &mut rows);
    }

    Ok(ChainRun { rows, energies, divergences, accept_sum, step_size: eps, max_depth_hits })
}

/// Run `cfg.chains` independent chains (parallel tasks over immutable data,
/// disjoint RNG streams) and merge deterministically by chain id.
pub fn run_chains(
    data: &TrialDataset,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
) -> Result<PosteriorSamples> {
    if cfg.chains == 0 || cfg.draws == 0 {
        return Err(Error::InvalidInput("chains and draws must be at least 1".into()));
    }
    let model = PosteriorModel::new(data, prior)?;
    let base = InitBase::from_data(data);
    let names = draw_names(&model);

    let results: Vec<Result<ChainRun>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(&model, cfg, c, &base))
        .collect();

    let mut draws = Vec::with_capacity(cfg.chains * cfg.draws * names.len());
    let mut chain_ids = Vec::new();
    let mut iters = Vec::new();
    let mut energies = Vec::new();
    let mut divergences = 0;
    let mut accept_sum = 0.0;
    let mut step_sizes = Vec::new();
    let mut max_depth_hits = 0;
    for (c, res) in results.into_iter().enumerate() {
        let run = res?;
        draws.extend_from_slice(&run.rows);
        energies.extend_from_slice(&run.energies);
        for it in 0..cfg.draws {
            chain_ids.push(c as u16);
            iters.push(it as u32);
        }
        divergences += run.divergences;
        accept_sum += run.accept_sum;
        step_sizes.push(run.step_size);
        max_depth_hits += run.max_depth_hits;
    }

    let mut samples = PosteriorSamples {
        param_names: names,
        n_chains: cfg.chains,
        n_kept: cfg.draws,
        draws,
        chain_ids,
        iters,
        energies,
        diagnostics: None,
        groups: data.groups().to_vec(),
        group_column_names: data.column_names().to_vec(),
        d_max: data.d_max(),
        dose_levels: data.dose_levels().to_vec(),
        seed: cfg.seed,
    };
    let accept_mean = accept_sum / (cfg.chains * cfg.draws) as f64;
    let (rhat, ess_bulk) = if cfg.chains >= 2 && cfg.draws >= 50 {
        compute_diagnostics(&samples)?
    } else {
        (vec![f64::NAN; samples.dim()], vec![f64::NAN; samples.dim()])
    };
    samples.diagnostics = Some(Diagnostics {
        rhat,
        ess_bulk,
        divergences,
        accept_mean,
        step_sizes,
        max_depth_hits,
    });
    Ok(samples)
}
