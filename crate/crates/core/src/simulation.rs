//! Synthetic dose-finding trials and the replication harness.
//!
//! Trials are generated from an Emax model with Hill slope 1, equal
//! allocation over the dose grid {0, 12.5, 25, 50, 100}, residual sd 0.25 and
//! i.i.d. standard normal covariates. The scenario library covers the linear
//! truth settings (null / only prognostic / prognostic and predictive / only
//! predictive) plus non-linear variants (logistic, step and interaction
//! covariate maps) of the prognostic-and-predictive setting.
//!
//! The harness runs `(scenario, method, replication)` fits with paired
//! seeding (every method sees the identical dataset for a given replication),
//! collects treatment-effect RMSE, HPD selection flags and subgroup metrics,
//! and aggregates them.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::emax::DoseResponseParams;
use crate::mcmc::{run_chains, PosteriorSamples, SamplerConfig};
use crate::priors::{OracleSupport, PriorFamily, PriorSpec};
use crate::rng::{stream_rng, Stream};
use crate::subgroup::{self, SubgroupMetrics};
use crate::{Error, Result};

/// Default dose grid shared by all scenarios.
pub const DOSE_GRID: [f64; 5] = [0.0, 12.5, 25.0, 50.0, 100.0];
/// Residual sd of the generative model.
pub const SIGMA_TRUE: f64 = 0.25;

/// Scenario truth library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Constant parameters for all patients.
    Null,
    /// Linear effects on E0 only.
    OnlyPrognostic,
    /// Linear effects on E0, Emax and log ED50 (Emax via x2, x3).
    ProgAndPred,
    /// Linear effects on Emax and log ED50 only.
    OnlyPred,
    /// Non-linear family: linear row (Emax via x1, x3).
    FormLinear,
    /// Non-linear family: logistic transforms of x1..x3.
    FormLogistic,
    /// Non-linear family: step functions of x1..x3.
    FormStep,
    /// Non-linear family: linear plus pairwise interactions.
    FormInteraction,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Null => "null",
            ScenarioKind::OnlyPrognostic => "only_prognostic",
            ScenarioKind::ProgAndPred => "prog_and_pred",
            ScenarioKind::OnlyPred => "only_pred",
            ScenarioKind::FormLinear => "linear",
            ScenarioKind::FormLogistic => "logistic",
            ScenarioKind::FormStep => "step",
            ScenarioKind::FormInteraction => "interaction",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "null" => ScenarioKind::Null,
            "only_prognostic" => ScenarioKind::OnlyPrognostic,
            "prog_and_pred" => ScenarioKind::ProgAndPred,
            "only_pred" => ScenarioKind::OnlyPred,
            "linear" => ScenarioKind::FormLinear,
            "logistic" => ScenarioKind::FormLogistic,
            "step" => ScenarioKind::FormStep,
            "interaction" => ScenarioKind::FormInteraction,
            other => {
                return Err(Error::InvalidInput(format!("unknown scenario `{other}`")));
            }
        })
    }

    /// True covariate support (per covariate index), used by the oracle
    /// method: `(prognostic, predictive)`.
    pub fn support(self, k: usize) -> (Vec<bool>, Vec<bool>) {
        let mut prog = vec![false; k];
        let mut pred = vec![false; k];
        match self {
            ScenarioKind::Null => {}
            ScenarioKind::OnlyPrognostic => {
                prog[..3].fill(true);
            }
            ScenarioKind::ProgAndPred => {
                prog[..3].fill(true);
                pred[1] = true;
                pred[2] = true;
            }
            ScenarioKind::OnlyPred => {
                pred[1] = true;
                pred[2] = true;
            }
            // non-linear rows: Emax uses x1, x3; ED50 uses x2, x3
            ScenarioKind::FormLinear
            | ScenarioKind::FormLogistic
            | ScenarioKind::FormStep
            | ScenarioKind::FormInteraction => {
                prog[..3].fill(true);
                pred[0] = true;
                pred[1] = true;
                pred[2] = true;
            }
        }
        (prog, pred)
    }
}

/// `L(z) = 1/(1 + exp(-2z))`.
fn logistic2(z: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * z).exp())
}

/// `I(z > 0)`.
fn step(z: f64) -> f64 {
    (z > 0.0) as u8 as f64
}

/// True `(E0, Emax, ED50)` for a covariate vector.
pub fn scenario_functions(kind: ScenarioKind, x: &[f64]) -> (f64, f64, f64) {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    match kind {
        ScenarioKind::Null => (1.2, 0.17, 20.0),
        ScenarioKind::OnlyPrognostic => {
            (1.2 + 0.1 * x1 + 0.1 * x2 + 0.05 * x3, 0.17, 20.0)
        }
        ScenarioKind::ProgAndPred => (
            1.2 + 0.1 * x1 + 0.1 * x2 + 0.05 * x3,
            0.17 + 0.1 * x2 - 0.1 * x3,
            20.0 * (-0.75 * x2 + 0.75 * x3).exp(),
        ),
        ScenarioKind::OnlyPred => (
            1.2,
            0.17 + 0.1 * x2 - 0.1 * x3,
            20.0 * (-0.75 * x2 + 0.75 * x3).exp(),
        ),
        ScenarioKind::FormLinear => (
            1.2 + 0.1 * x1 + 0.1 * x2 + 0.05 * x3,
            0.17 + 0.1 * x1 - 0.1 * x3,
            20.0 * (-0.75 * x2 + 0.75 * x3).exp(),
        ),
        ScenarioKind::FormLogistic => (
            0.7 + 0.4 * logistic2(x1) + 0.4 * logistic2(x2) + 0.2 * logistic2(x3),
            0.17 + 0.34 * logistic2(x1) - 0.34 * logistic2(x3),
            20.0 * (-2.0 * logistic2(x2) + 2.0 * logistic2(x3)).exp(),
        ),
        ScenarioKind::FormStep => (
            1.2 + 0.1 * step(x1) + 0.1 * step(x2) + 0.05 * step(x3),
            0.17 + 0.1 * step(x1) - 0.1 * step(x3),
            20.0 * (-0.75 * step(x2) + 0.75 * step(x3)).exp(),
        ),
        ScenarioKind::FormInteraction => (
            1.2 + 0.1 * x1 + 0.1 * x2 + 0.05 * x3 + 0.2 * x1 * x2,
            0.17 + 0.1 * x1 - 0.1 * x3 + 0.2 * x2 * x3,
            20.0 * (-0.75 * x2 + 0.75 * x3 - x2 * x3).exp(),
        ),
    }
}

/// Generative truth for one simulated trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub k: usize,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n: usize, k: usize) -> Result<Self> {
        if n == 0 || n % DOSE_GRID.len() != 0 {
            return Err(Error::InvalidInput(format!(
                "n = {n} must be a positive multiple of {} dose levels",
                DOSE_GRID.len()
            )));
        }
        if k < 3 && kind != ScenarioKind::Null {
            return Err(Error::InvalidInput("scenario truths use x1..x3; need k >= 3".into()));
        }
        if k == 0 {
            return Err(Error::InvalidInput("need at least one covariate".into()));
        }
        Ok(Self { kind, n, k })
    }
}

/// A generated trial: the model-facing dataset plus the generative truth.
#[derive(Debug, Clone)]
pub struct GeneratedTrial {
    pub data: TrialDataset,
    /// Per-patient true dose-response parameters (h = 1).
    pub truth: Vec<DoseResponseParams>,
}

impl GeneratedTrial {
    /// True treatment effect at dose `d` for patient `i` (Hill slope 1).
    pub fn true_effect(&self, i: usize, d: f64) -> f64 {
        let t = &self.truth[i];
        t.emax * d / (t.ed50 + d)
    }

    /// Patients whose true treatment effect at `d_star` exceeds `psi`.
    pub fn true_subgroup(&self, psi: f64, d_star: f64) -> Vec<usize> {
        (0..self.truth.len()).filter(|&i| self.true_effect(i, d_star) > psi).collect()
    }
}

/// Generate one trial: i.i.d. standard normal covariates, block dose
/// allocation, normal responses around the scenario truth.
pub fn generate_trial<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Result<GeneratedTrial> {
    let per_level = spec.n / DOSE_GRID.len();
    let mut doses = Vec::with_capacity(spec.n);
    for &d in DOSE_GRID.iter() {
        doses.extend(std::iter::repeat(d).take(per_level));
    }
    let mut raw_cols: Vec<Vec<f64>> = vec![Vec::with_capacity(spec.n); spec.k];
    let mut responses = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    let mut x = vec![0.0; spec.k];
    for &d in &doses {
        for (j, xv) in x.iter_mut().enumerate() {
            *xv = rng.sample(StandardNormal);
            raw_cols[j].push(*xv);
        }
        let (e0, emax, ed50) = scenario_functions(spec.kind, &x);
        let mu = e0 + emax * d / (ed50 + d);
        responses.push(mu + SIGMA_TRUE * rng.sample::<f64, _>(StandardNormal));
        truth.push(DoseResponseParams { e0, emax, ed50, h: 1.0, sigma: SIGMA_TRUE });
    }
    let continuous = raw_cols
        .into_iter()
        .enumerate()
        .map(|(j, col)| (format!("x{}", j + 1), col))
        .collect();
    let data = TrialDataset::new(doses, responses, continuous, vec![])?;
    Ok(GeneratedTrial { data, truth })
}

/// Average over patients of the per-patient RMSE across doses
/// (inner: doses, outer: patients). `pred` and `truth` are `n x d` row-major.
pub fn rmse_treatment_effects(
    pred: &[f64],
    truth: &[f64],
    n_patients: usize,
    n_doses: usize,
) -> Result<f64> {
    if pred.len() != n_patients * n_doses || truth.len() != pred.len() {
        return Err(Error::InvalidInput("prediction/truth shape mismatch".into()));
    }
    let mut acc = 0.0;
    for i in 0..n_patients {
        let mut sq = 0.0;
        for d in 0..n_doses {
            let e = pred[i * n_doses + d] - truth[i * n_doses + d];
            sq += e * e;
        }
        acc += (sq / n_doses as f64).sqrt();
    }
    Ok(acc / n_patients as f64)
}

/// The alternate composition (inner: patients, outer: doses), published
/// alongside the primary one.
pub fn rmse_treatment_effects_alt(
    pred: &[f64],
    truth: &[f64],
    n_patients: usize,
    n_doses: usize,
) -> Result<f64> {
    if pred.len() != n_patients * n_doses || truth.len() != pred.len() {
        return Err(Error::InvalidInput("prediction/truth shape mismatch".into()));
    }
    let mut acc = 0.0;
    for d in 0..n_doses {
        let mut sq = 0.0;
        for i in 0..n_patients {
            let e = pred[i * n_doses + d] - truth[i * n_doses + d];
            sq += e * e;
        }
        acc += (sq / n_patients as f64).sqrt();
    }
    Ok(acc / n_doses as f64)
}

/// Study configuration shared by all `(scenario, method, rep)` cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub reps: usize,
    pub base_seed: u64,
    pub mcmc: SamplerConfig,
    pub psi: f64,
    pub omega: f64,
    /// HPD mass for covariate selection.
    pub hpd_level: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            reps: 50,
            base_seed: 0,
            mcmc: SamplerConfig { chains: 2, warmup: 400, draws: 500, ..Default::default() },
            psi: 0.2,
            omega: 0.5,
            hpd_level: 0.5,
        }
    }
}

/// One `(scenario, method, replication)` outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepRecord {
    pub scenario: String,
    pub method: String,
    pub rep: usize,
    pub dataset_hash: u64,
    pub failed: bool,
    pub rmse: Option<f64>,
    pub rmse_alt: Option<f64>,
    /// Per covariate group, in group order.
    pub selected_e0: Vec<bool>,
    pub selected_ed50: Vec<bool>,
    pub selected_emax: Vec<bool>,
    pub selected_pred: Vec<bool>,
    pub metrics: Option<SubgroupMetrics>,
    pub divergences: usize,
}

/// Aggregates over the successful replications of one `(scenario, method)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub scenario: String,
    pub method: String,
    pub reps: usize,
    pub failures: usize,
    pub sel_freq_e0: Vec<f64>,
    pub sel_freq_ed50: Vec<f64>,
    pub sel_freq_emax: Vec<f64>,
    pub sel_freq_pred: Vec<f64>,
    pub mean_rmse: Option<f64>,
    pub mean_rmse_alt: Option<f64>,
    pub mean_size_true: Option<f64>,
    pub mean_size_est: Option<f64>,
    pub non_null_rate: Option<f64>,
    pub mean_sens: Option<f64>,
    pub mean_spec: Option<f64>,
    pub mean_ppv: Option<f64>,
    pub mean_npv: Option<f64>,
}

/// Full study output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub records: Vec<RepRecord>,
    pub aggregates: Vec<AggregateRecord>,
}

/// Prior configuration for one of the named methods compared in the study:
/// `null`, `noshrink` (flat), `oracle` (true support, flat inside),
/// `hs`/`hs_dep`, `rhs`/`rhs_dep`, `sas`/`sas_dep`. The oracle support mask
/// is deferred until the scenario is known (see [`resolve_prior`]).
pub fn method_prior(
    name: &str,
    phi: f64,
    d_max: f64,
    eta_hs: (f64, f64, f64),
    eta_rhs: (f64, f64, f64),
) -> Result<PriorSpec> {
    Ok(match name {
        "null" => PriorSpec::null(d_max),
        "noshrink" => PriorSpec::flat(d_max),
        "oracle" => {
            let mut spec = PriorSpec::oracle(
                OracleSupport { prognostic: Vec::new(), predictive: Vec::new() },
                d_max,
            );
            spec.oracle = None;
            spec
        }
        "hs" => PriorSpec::horseshoe(eta_hs, d_max),
        "hs_dep" => PriorSpec::horseshoe(eta_hs, d_max).with_dependent(true),
        "rhs" => PriorSpec::reg_horseshoe(eta_rhs, d_max),
        "rhs_dep" => PriorSpec::reg_horseshoe(eta_rhs, d_max).with_dependent(true),
        "sas" => PriorSpec::spike_slab(phi, d_max),
        "sas_dep" => PriorSpec::spike_slab(phi, d_max).with_dependent(true),
        other => return Err(Error::InvalidInput(format!("unknown method `{other}`"))),
    })
}

/// Complete a method's prior for a concrete scenario: oracle masks are filled
/// from the scenario's true support.
pub fn resolve_prior(base: &PriorSpec, kind: ScenarioKind, k: usize) -> PriorSpec {
    let mut spec = base.clone();
    if spec.family == PriorFamily::OracleMask && spec.oracle.is_none() {
        let (prognostic, predictive) = kind.support(k);
        spec.oracle = Some(OracleSupport { prognostic, predictive });
    }
    spec
}

fn fit_seed(base: u64, scenario_idx: usize, method_idx: usize, rep: usize) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for v in [scenario_idx as u64, method_idx as u64, rep as u64] {
        h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    }
    h
}

fn evaluate_fit(
    trial: &GeneratedTrial,
    samples: &PosteriorSamples,
    cfg: &StudyConfig,
) -> Result<(f64, f64, Vec<subgroup::GroupSelection>, SubgroupMetrics)> {
    let data = &trial.data;
    let active: Vec<f64> = data.active_doses().to_vec();
    let te = subgroup::treatment_effect_draws(samples, data, &active)?;
    let n = data.n();
    let n_doses = active.len();
    // posterior mean effect per patient and dose
    let mut pred = vec![0.0; n * n_doses];
    let mut truth = vec![0.0; n * n_doses];
    for i in 0..n {
        for (di, &d) in active.iter().enumerate() {
            pred[i * n_doses + di] = crate::stats::mean(te.draws_for(di, i));
            truth[i * n_doses + di] = trial.true_effect(i, d);
        }
    }
    let rmse = rmse_treatment_effects(&pred, &truth, n, n_doses)?;
    let rmse_alt = rmse_treatment_effects_alt(&pred, &truth, n, n_doses)?;

    let selection = subgroup::select_predictive(samples, cfg.hpd_level)?;
    let d_star = data.d_max();
    let est = subgroup::identify_subgroup(&te, d_star, cfg.psi, cfg.omega)?;
    let truth_set = trial.true_subgroup(cfg.psi, d_star);
    let metrics = subgroup::subgroup_metrics(&est.members, &truth_set, n);
    Ok((rmse, rmse_alt, selection, metrics))
}

/// Run the full study grid. Replications are parallel tasks; every method
/// sees the identical dataset within a replication (paired seeding).
pub fn run_study(
    scenarios: &[ScenarioSpec],
    methods: &[(String, PriorSpec)],
    cfg: &StudyConfig,
) -> Result<StudyReport> {
    if cfg.reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    let cells: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..cfg.reps).map(move |r| (s, r)))
        .collect();

    let all: Vec<Result<Vec<RepRecord>>> = cells
        .par_iter()
        .map(|&(s_idx, rep)| {
            let spec = &scenarios[s_idx];
            let mut rng =
                stream_rng(cfg.base_seed, Stream::Replication((s_idx * cfg.reps + rep) as u64));
            let trial = generate_trial(spec, &mut rng)?;
            let hash = trial.data.content_hash();
            let mut records = Vec::with_capacity(methods.len());
            for (m_idx, (m_name, base_prior)) in methods.iter().enumerate() {
                let prior = resolve_prior(base_prior, spec.kind, spec.k);
                let mcmc_cfg = SamplerConfig {
                    seed: fit_seed(cfg.base_seed, s_idx, m_idx, rep),
                    ..cfg.mcmc.clone()
                };
                let mut record = RepRecord {
                    scenario: spec.kind.name().to_string(),
                    method: m_name.clone(),
                    rep,
                    dataset_hash: hash,
                    failed: true,
                    rmse: None,
                    rmse_alt: None,
                    selected_e0: vec![false; spec.k],
                    selected_ed50: vec![false; spec.k],
                    selected_emax: vec![false; spec.k],
                    selected_pred: vec![false; spec.k],
                    metrics: None,
                    divergences: 0,
                };
                match run_chains(&trial.data, &prior, &mcmc_cfg) {
                    Err(_) => {}
                    Ok(samples) => {
                        record.divergences =
                            samples.diagnostics.as_ref().map_or(0, |d| d.divergences);
                        if let Ok((rmse, rmse_alt, selection, metrics)) =
                            evaluate_fit(&trial, &samples, cfg)
                        {
                            record.failed = false;
                            record.rmse = Some(rmse);
                            record.rmse_alt = Some(rmse_alt);
                            for (g, sel) in selection.iter().enumerate() {
                                record.selected_e0[g] = sel.on_e0;
                                record.selected_ed50[g] = sel.on_ed50;
                                record.selected_emax[g] = sel.on_emax;
                                record.selected_pred[g] = sel.predictive;
                            }
                            record.metrics = Some(metrics);
                        }
                    }
                }
                records.push(record);
            }
            Ok(records)
        })
        .collect();

    let mut records = Vec::with_capacity(cells.len() * methods.len());
    for r in all {
        records.extend(r?);
    }
    let aggregates = aggregate(&records);
    Ok(StudyReport { records, aggregates })
}

/// Aggregate per-replication records by `(scenario, method)`. Records are
/// sorted internally, so the result does not depend on input order.
pub fn aggregate(records: &[RepRecord]) -> Vec<AggregateRecord> {
    let mut sorted: Vec<&RepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.scenario, &a.method, a.rep).cmp(&(&b.scenario, &b.method, b.rep))
    });
    let mut out: Vec<AggregateRecord> = Vec::new();
    let mut idx = 0;
    while idx < sorted.len() {
        let key = (&sorted[idx].scenario, &sorted[idx].method);
        let group: Vec<&RepRecord> = sorted[idx..]
            .iter()
            .take_while(|r| (&r.scenario, &r.method) == key)
            .copied()
            .collect();
        idx += group.len();
        let k = group[0].selected_e0.len();
        let ok: Vec<&&RepRecord> = group.iter().filter(|r| !r.failed).collect();
        let n_ok = ok.len();
        let freq = |pick: &dyn Fn(&RepRecord) -> &Vec<bool>| -> Vec<f64> {
            (0..k)
                .map(|g| {
                    if n_ok == 0 {
                        f64::NAN
                    } else {
                        ok.iter().filter(|r| pick(r)[g]).count() as f64 / n_ok as f64
                    }
                })
                .collect()
        };
        let mean_of = |vals: Vec<f64>| -> Option<f64> {
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        };
        let metric_mean = |pick: &dyn Fn(&SubgroupMetrics) -> Option<f64>| -> Option<f64> {
            mean_of(ok.iter().filter_map(|r| r.metrics.as_ref().and_then(pick)).collect())
        };
        out.push(AggregateRecord {
            scenario: group[0].scenario.clone(),
            method: group[0].method.clone(),
            reps: group.len(),
            failures: group.len() - n_ok,
            sel_freq_e0: freq(&|r| &r.selected_e0),
            sel_freq_ed50: freq(&|r| &r.selected_ed50),
            sel_freq_emax: freq(&|r| &r.selected_emax),
            sel_freq_pred: freq(&|r| &r.selected_pred),
            mean_rmse: mean_of(ok.iter().filter_map(|r| r.rmse).collect()),
            mean_rmse_alt: mean_of(ok.iter().filter_map(|r| r.rmse_alt).collect()),
            mean_size_true: mean_of(
                ok.iter().filter_map(|r| r.metrics.map(|m| m.size_true as f64)).collect(),
            ),
            mean_size_est: mean_of(
                ok.iter().filter_map(|r| r.metrics.map(|m| m.size_est as f64)).collect(),
            ),
            non_null_rate: mean_of(
                ok.iter()
                    .filter_map(|r| r.metrics.map(|m| m.non_null as u8 as f64))
                    .collect(),
            ),
            mean_sens: metric_mean(&|m| m.sens),
            mean_spec: metric_mean(&|m| m.spec),
            mean_ppv: metric_mean(&|m| m.ppv),
            mean_npv: metric_mean(&|m| m.npv),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_functions_hand_values() {
        let mut x = vec![1.0; 5];
        // step form with all positive x
        let (e0, emax, _) = scenario_functions(ScenarioKind::FormStep, &x);
        assert!((e0 - 1.45).abs() < 1e-12);
        assert!((emax - 0.17).abs() < 1e-12);
        // logistic at x = 0: L(0) = 1/2
        x.fill(0.0);
        let (e0, _, _) = scenario_functions(ScenarioKind::FormLogistic, &x);
        assert!((e0 - 1.2).abs() < 1e-12);
        // interaction at x = 0
        let (_, _, ed50) = scenario_functions(ScenarioKind::FormInteraction, &x);
        assert!((ed50 - 20.0).abs() < 1e-12);
    }

    #[test]
    fn truth_at_origin_matches_intercepts() {
        let x = vec![0.0; 4];
        for kind in [
            ScenarioKind::Null,
            ScenarioKind::OnlyPrognostic,
            ScenarioKind::ProgAndPred,
            ScenarioKind::OnlyPred,
            ScenarioKind::FormLinear,
            ScenarioKind::FormStep,
            ScenarioKind::FormInteraction,
        ] {
            let (e0, emax, ed50) = scenario_functions(kind, &x);
            assert_eq!(e0, 1.2, "{kind:?}");
            assert_eq!(emax, 0.17, "{kind:?}");
            assert_eq!(ed50, 20.0, "{kind:?}");
        }
    }

    #[test]
    fn null_scenario_shares_parameters() {
        let spec = ScenarioSpec::new(ScenarioKind::Null, 50, 4).unwrap();
        let mut rng = stream_rng(1, Stream::Replication(0));
        let trial = generate_trial(&spec, &mut rng).unwrap();
        for t in &trial.truth {
            assert_eq!((t.e0, t.emax, t.ed50), (1.2, 0.17, 20.0));
        }
    }

    #[test]
    fn scenario3_population_quantiles() {
        // large generated population reproduces the documented 10%/90%
        // quantiles of true Emax and ED50
        let spec = ScenarioSpec::new(ScenarioKind::ProgAndPred, 200_000, 3).unwrap();
        let mut rng = stream_rng(2, Stream::Replication(1));
        let trial = generate_trial(&spec, &mut rng).unwrap();
        let mut emax: Vec<f64> = trial.truth.iter().map(|t| t.emax).collect();
        let mut ed50: Vec<f64> = trial.truth.iter().map(|t| t.ed50).collect();
        emax.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ed50.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |v: &[f64], p: f64| crate::stats::quantile_sorted(v, p);
        assert!((q(&emax, 0.1) - 0.0).abs() < 0.02, "{}", q(&emax, 0.1));
        assert!((q(&emax, 0.9) - 0.34).abs() < 0.02, "{}", q(&emax, 0.9));
        assert!(q(&ed50, 0.1) > 5.0 * 0.85 && q(&ed50, 0.1) < 5.0 * 1.15, "{}", q(&ed50, 0.1));
        assert!(q(&ed50, 0.9) > 80.0 * 0.85 && q(&ed50, 0.9) < 80.0 * 1.15, "{}", q(&ed50, 0.9));
    }

    #[test]
    fn true_subgroup_size_near_published_average() {
        let spec = ScenarioSpec::new(ScenarioKind::ProgAndPred, 500, 10).unwrap();
        let mut sizes = Vec::new();
        for rep in 0..200 {
            let mut rng = stream_rng(3, Stream::Replication(rep));
            let trial = generate_trial(&spec, &mut rng).unwrap();
            sizes.push(trial.true_subgroup(0.2, 100.0).len() as f64);
        }
        let mean = crate::stats::mean(&sizes);
        assert!((mean - 175.0).abs() < 10.0, "mean |S| = {mean}");
    }

    #[test]
    fn paired_seeding_gives_identical_datasets() {
        let spec = ScenarioSpec::new(ScenarioKind::OnlyPred, 100, 5).unwrap();
        let t1 = generate_trial(&spec, &mut stream_rng(9, Stream::Replication(7))).unwrap();
        let t2 = generate_trial(&spec, &mut stream_rng(9, Stream::Replication(7))).unwrap();
        assert_eq!(t1.data.content_hash(), t2.data.content_hash());
        let t3 = generate_trial(&spec, &mut stream_rng(9, Stream::Replication(8))).unwrap();
        assert_ne!(t1.data.content_hash(), t3.data.content_hash());
    }

    #[test]
    fn rmse_compositions() {
        // pred == truth
        assert_eq!(rmse_treatment_effects(&[1.0; 8], &[1.0; 8], 2, 4).unwrap(), 0.0);
        // constant error e everywhere -> |e|
        let pred = vec![1.5; 8];
        let truth = vec![1.0; 8];
        assert!((rmse_treatment_effects(&pred, &truth, 2, 4).unwrap() - 0.5).abs() < 1e-12);
        // per-patient errors {0,0,0,0} and {1,1,1,1} -> (0 + 1)/2 = 0.5
        let pred = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let truth = vec![0.0; 8];
        assert!((rmse_treatment_effects(&pred, &truth, 2, 4).unwrap() - 0.5).abs() < 1e-12);
        // alternate composition differs: sqrt(0.5) per dose
        let alt = rmse_treatment_effects_alt(&pred, &truth, 2, 4).unwrap();
        assert!((alt - 0.5f64.sqrt()).abs() < 1e-12);
        // shape mismatch
        assert!(rmse_treatment_effects(&pred, &truth[..4], 2, 4).is_err());
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let rec = |rep: usize, rmse: f64, sel: bool| RepRecord {
            scenario: "null".into(),
            method: "rhs".into(),
            rep,
            dataset_hash: 0,
            failed: false,
            rmse: Some(rmse),
            rmse_alt: Some(rmse),
            selected_e0: vec![sel],
            selected_ed50: vec![false],
            selected_emax: vec![sel],
            selected_pred: vec![sel],
            metrics: Some(subgroup_metrics_stub()),
            divergences: 0,
        };
        let a = vec![rec(0, 0.1, true), rec(1, 0.3, false), rec(2, 0.2, true)];
        let b = vec![a[2].clone(), a[0].clone(), a[1].clone()];
        let agg_a = aggregate(&a);
        let agg_b = aggregate(&b);
        assert_eq!(agg_a[0].mean_rmse, agg_b[0].mean_rmse);
        assert_eq!(agg_a[0].sel_freq_emax, agg_b[0].sel_freq_emax);
    }

    fn subgroup_metrics_stub() -> SubgroupMetrics {
        SubgroupMetrics {
            sens: None,
            spec: Some(1.0),
            ppv: None,
            npv: Some(1.0),
            size_true: 0,
            size_est: 0,
            non_null: false,
        }
    }

    #[test]
    fn oracle_mask_resolution() {
        let base = PriorSpec::oracle(
            OracleSupport { prognostic: vec![], predictive: vec![] },
            100.0,
        );
        // an empty mask is replaced per scenario
        let mut spec = base.clone();
        spec.oracle = None;
        let resolved = resolve_prior(&spec, ScenarioKind::ProgAndPred, 5);
        let support = resolved.oracle.unwrap();
        assert_eq!(support.prognostic, vec![true, true, true, false, false]);
        assert_eq!(support.predictive, vec![false, true, true, false, false]);
    }
}
