//! Subcommand implementations. Every run writes a manifest with all resolved
//! settings so it can be reproduced exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use doseshrink_core::calibration::{
    self, guesstimate_thresholds, BlockThresholds, CalibrationResult, HorseshoeKind,
};
use doseshrink_core::data::{load_dataset, ColumnSchema, TrialDataset};
use doseshrink_core::mcmc::{run_chains, PosteriorSamples, SamplerConfig};
use doseshrink_core::prefit::fit_emax_ml;
use doseshrink_core::priors::PriorSpec;
use doseshrink_core::simulation::{
    self, method_prior, ScenarioKind, ScenarioSpec, StudyConfig, StudyReport,
};
use doseshrink_core::subgroup::{identify_subgroup, select_predictive, treatment_effect_draws};
use doseshrink_core::{emax, stats, Error, Result};

use crate::config::RunConfig;

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.output.dir).join(name)
}

fn load_data(cfg: &RunConfig) -> Result<TrialDataset> {
    if cfg.data.path.is_empty() {
        return Err(Error::InvalidInput("config has no data.path".into()));
    }
    if !Path::new(&cfg.data.path).exists() {
        return Err(Error::Data(format!("data file not found: {}", cfg.data.path)));
    }
    let schema = ColumnSchema {
        dose: cfg.data.dose.clone(),
        response: cfg.data.response.clone(),
        categorical: cfg.data.categorical.clone(),
    };
    load_dataset(&cfg.data.path, &schema)
}

fn sampler_config(cfg: &RunConfig) -> SamplerConfig {
    SamplerConfig {
        chains: cfg.mcmc.chains,
        warmup: cfg.mcmc.warmup,
        draws: cfg.mcmc.draws,
        target_accept: cfg.mcmc.target_accept,
        max_treedepth: cfg.mcmc.max_treedepth,
        seed: cfg.mcmc.seed,
    }
}

/// Guesstimates for calibration thresholds: explicit config values or the ML
/// pre-fit.
fn guesstimates(cfg: &RunConfig, data: Option<&TrialDataset>) -> Result<(f64, f64)> {
    if cfg.prior.prefit {
        let data = data.ok_or_else(|| {
            Error::InvalidInput("prior.prefit = true needs a dataset".into())
        })?;
        let fit = fit_emax_ml(data)?;
        return Ok((fit.e0, fit.emax));
    }
    match (cfg.prior.e0_star, cfg.prior.emax_star) {
        (Some(e0), Some(emax)) => Ok((e0, emax)),
        _ => Err(Error::InvalidInput(
            "auto-calibration needs guesstimates: set prior.e0_star and prior.emax_star, \
             or prior.prefit = true"
                .into(),
        )),
    }
}

fn phi_for(cfg: &RunConfig, k: usize) -> f64 {
    cfg.prior.phi.unwrap_or(2.0 / k as f64)
}

struct ResolvedPrior {
    spec: PriorSpec,
    calibration: Option<serde_json::Value>,
}

fn calibration_json(
    phi: f64,
    thresholds: &BlockThresholds,
    kind: HorseshoeKind,
    results: &[CalibrationResult; 3],
) -> serde_json::Value {
    serde_json::json!({
        "phi": phi,
        "family": kind,
        "thresholds": thresholds,
        "blocks": {
            "beta": results[0],
            "gamma": results[1],
            "delta": results[2],
        },
    })
}

fn resolve_prior(cfg: &RunConfig, data: &TrialDataset) -> Result<ResolvedPrior> {
    let d_max = data.d_max();
    let k = data.k();
    let phi = phi_for(cfg, k);
    let family = cfg.prior.family.as_str();
    let etas = match (cfg.prior.eta_beta, cfg.prior.eta_gamma, cfg.prior.eta_delta) {
        (Some(b), Some(g), Some(d)) => Some((b, g, d)),
        (None, None, None) => None,
        _ => {
            return Err(Error::InvalidInput(
                "set all of eta_beta, eta_gamma, eta_delta or none".into(),
            ));
        }
    };

    let mut calibration_info = None;
    let mut resolved_etas = etas;
    let needs_etas = matches!(family, "horseshoe" | "reg_horseshoe");
    if needs_etas && resolved_etas.is_none() {
        if !cfg.prior.auto_calibrate {
            return Err(Error::InvalidInput(
                "horseshoe families need eta_beta/eta_gamma/eta_delta or \
                 prior.auto_calibrate = true"
                    .into(),
            ));
        }
        let (e0_star, emax_star) = guesstimates(cfg, Some(data))?;
        let thresholds = guesstimate_thresholds(e0_star, emax_star)?;
        let kind = if family == "horseshoe" {
            HorseshoeKind::Horseshoe
        } else {
            HorseshoeKind::RegHorseshoe
        };
        let results =
            calibration::calibrate_blocks(phi, &thresholds, kind, cfg.prior.n_mc, cfg.mcmc.seed)?;
        resolved_etas = Some((results[0].eta, results[1].eta, results[2].eta));
        calibration_info = Some(calibration_json(phi, &thresholds, kind, &results));
    }

    let spec = match family {
        "spike_slab" => PriorSpec::spike_slab(phi, d_max),
        "horseshoe" => PriorSpec::horseshoe(resolved_etas.unwrap(), d_max),
        "reg_horseshoe" => PriorSpec::reg_horseshoe(resolved_etas.unwrap(), d_max),
        "flat" => PriorSpec::flat(d_max),
        "null" => PriorSpec::null(d_max),
        other => {
            return Err(Error::InvalidInput(format!("unknown prior family `{other}`")));
        }
    };
    let mut spec = spec.with_dependent(cfg.prior.dependent);
    spec.phi_inc = cfg.prior.phi_inc;
    // dependence only applies to the shrinkage families
    if matches!(family, "flat" | "null") {
        spec.dependent = false;
    }
    spec.validate()?;
    Ok(ResolvedPrior { spec, calibration: calibration_info })
}

fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    resolved_prior: Option<&PriorSpec>,
    extra: serde_json::Value,
) -> Result<()> {
    let manifest = serde_json::json!({
        "tool": "doseshrink",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cfg.mcmc.seed,
        "config": cfg,
        "resolved_prior": resolved_prior,
        "extra": extra,
    });
    std::fs::write(out_path(cfg, "manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    // a ready-to-rerun copy of the resolved configuration
    std::fs::write(out_path(cfg, "config_resolved.toml"), cfg.to_toml())?;
    Ok(())
}

pub fn calibrate(cfg: &RunConfig) -> Result<()> {
    let data = if cfg.data.path.is_empty() { None } else { Some(load_data(cfg)?) };
    let k = data.as_ref().map(|d| d.k());
    let phi = match (cfg.prior.phi, k) {
        (Some(phi), _) => phi,
        (None, Some(k)) => 2.0 / k as f64,
        (None, None) => {
            return Err(Error::InvalidInput(
                "calibrate needs prior.phi or a dataset to derive phi = 2/k".into(),
            ));
        }
    };
    let (e0_star, emax_star) = guesstimates(cfg, data.as_ref())?;
    let thresholds = guesstimate_thresholds(e0_star, emax_star)?;
    let kind = match cfg.prior.family.as_str() {
        "horseshoe" => HorseshoeKind::Horseshoe,
        "reg_horseshoe" => HorseshoeKind::RegHorseshoe,
        other => {
            return Err(Error::InvalidInput(format!(
                "calibrate applies to horseshoe families, not `{other}`"
            )));
        }
    };
    let results =
        calibration::calibrate_blocks(phi, &thresholds, kind, cfg.prior.n_mc, cfg.mcmc.seed)?;
    let report = serde_json::json!({
        "inputs": {
            "phi": phi,
            "e0_star": e0_star,
            "emax_star": emax_star,
            "n_mc": cfg.prior.n_mc,
            "seed": cfg.mcmc.seed,
        },
        "calibration": calibration_json(phi, &thresholds, kind, &results),
        "eta": {
            "beta": results[0].eta,
            "gamma": results[1].eta,
            "delta": results[2].eta,
        },
    });
    std::fs::write(out_path(cfg, "calibration.json"), serde_json::to_string_pretty(&report)?)?;
    write_manifest(cfg, "calibrate", None, serde_json::json!({}))?;
    println!(
        "calibrated: eta_beta = {:.4}, eta_gamma = {:.4}, eta_delta = {:.4}",
        results[0].eta, results[1].eta, results[2].eta
    );
    Ok(())
}

pub fn prefit(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let fit = fit_emax_ml(&data)?;
    std::fs::write(out_path(cfg, "prefit.json"), serde_json::to_string_pretty(&fit)?)?;
    write_manifest(cfg, "prefit", None, serde_json::json!({}))?;
    println!(
        "ML estimates: E0 = {:.4}, Emax = {:.4}, ED50 = {:.4}, h = {:.4}, sigma = {:.4}",
        fit.e0, fit.emax, fit.ed50, fit.h, fit.sigma
    );
    Ok(())
}

fn write_summary_csv(samples: &PosteriorSamples, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "parameter,mean,sd,q2.5,q25,q50,q75,q97.5")?;
    for (idx, name) in samples.param_names.iter().enumerate() {
        let mut col = samples.column(idx);
        let mean = stats::mean(&col);
        let sd = if col.len() > 1 { stats::sample_sd(&col) } else { 0.0 };
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| stats::quantile_sorted(&col, p);
        writeln!(
            f,
            "{name},{mean},{sd},{},{},{},{},{}",
            q(0.025),
            q(0.25),
            q(0.5),
            q(0.75),
            q(0.975)
        )?;
    }
    Ok(())
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    std::fs::write(
        out_path(cfg, "load_summary.json"),
        serde_json::to_string_pretty(&data.summary())?,
    )?;
    let resolved = resolve_prior(cfg, &data)?;
    let samples = run_chains(&data, &resolved.spec, &sampler_config(cfg))?;
    samples.write_csv(out_path(cfg, "posterior.csv"))?;
    samples.write_diagnostics_json(out_path(cfg, "diagnostics.json"))?;
    write_summary_csv(&samples, &out_path(cfg, "summary.csv"))?;
    write_manifest(
        cfg,
        "fit",
        Some(&resolved.spec),
        serde_json::json!({
            "data_hash": data.content_hash(),
            "calibration": resolved.calibration,
        }),
    )?;

    // convergence gate on the dose-response intercept parameters
    let diag = samples.diagnostics.as_ref().expect("diagnostics present");
    let mut bad = Vec::new();
    for name in ["alpha_e0", "alpha_emax", "ed50"] {
        if let Some(idx) = samples.idx(name) {
            let rhat = diag.rhat[idx];
            if rhat.is_finite() && rhat > 1.05 {
                bad.push(format!("{name} (R-hat {rhat:.3})"));
            }
        }
    }
    println!(
        "fit complete: {} draws, {} divergences, accept {:.3}",
        samples.n_rows(),
        diag.divergences,
        diag.accept_mean
    );
    if !bad.is_empty() {
        return Err(Error::Sampler(format!(
            "convergence failure: {} exceed R-hat 1.05 (report written to {})",
            bad.join(", "),
            cfg.output.dir
        )));
    }
    Ok(())
}

pub fn subgroup(cfg: &RunConfig) -> Result<()> {
    let data = load_data(cfg)?;
    let posterior_path = out_path(cfg, "posterior.csv");
    if !posterior_path.exists() {
        return Err(Error::Data(format!(
            "no posterior draws at {}; run `doseshrink fit` first",
            posterior_path.display()
        )));
    }
    let samples = PosteriorSamples::from_csv(&posterior_path, &data)?;
    let d_star = cfg.subgroup.d_star.unwrap_or_else(|| data.d_max());
    let mut doses: Vec<f64> = data.dose_levels().to_vec();
    if !doses.contains(&d_star) {
        doses.push(d_star);
        doses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let te = treatment_effect_draws(&samples, &data, &doses)?;
    let selection = select_predictive(&samples, cfg.subgroup.hpd_level)?;
    let result = identify_subgroup(&te, d_star, cfg.subgroup.psi, cfg.subgroup.omega)?;
    let report = serde_json::json!({
        "psi": result.psi,
        "omega": result.omega,
        "d_star": result.d_star,
        "non_null": result.non_null,
        "members": result.members,
        "prob_exceed": result.prob_exceed,
        "selection": selection,
    });
    std::fs::write(out_path(cfg, "subgroup.json"), serde_json::to_string_pretty(&report)?)?;
    doseshrink_core::subgroup::tree_summary_export(
        &te,
        &data,
        d_star,
        out_path(cfg, "tree_summary.csv"),
    )?;
    write_manifest(cfg, "subgroup", None, serde_json::json!({"d_star": d_star}))?;
    println!(
        "subgroup at d* = {d_star}: {} of {} patients (psi = {}, omega = {})",
        result.members.len(),
        data.n(),
        cfg.subgroup.psi,
        cfg.subgroup.omega
    );
    Ok(())
}

fn simulate_priors(cfg: &RunConfig, k: usize) -> Result<Vec<(String, PriorSpec)>> {
    let d_max = *simulation::DOSE_GRID.last().unwrap();
    let phi = phi_for(cfg, k);
    let explicit = match (cfg.prior.eta_beta, cfg.prior.eta_gamma, cfg.prior.eta_delta) {
        (Some(b), Some(g), Some(d)) => Some((b, g, d)),
        _ => None,
    };
    // calibrate lazily per family actually used
    let needs_hs = cfg.simulate.methods.iter().any(|m| m.starts_with("hs"));
    let needs_rhs = cfg.simulate.methods.iter().any(|m| m.starts_with("rhs"));
    let calibrated = |kind: HorseshoeKind| -> Result<(f64, f64, f64)> {
        let (e0_star, emax_star) =
            (cfg.prior.e0_star.unwrap_or(1.2), cfg.prior.emax_star.unwrap_or(0.17));
        let thresholds = guesstimate_thresholds(e0_star, emax_star)?;
        let r = calibration::calibrate_blocks(phi, &thresholds, kind, cfg.prior.n_mc, cfg.mcmc.seed)?;
        Ok((r[0].eta, r[1].eta, r[2].eta))
    };
    let eta_hs = if needs_hs {
        explicit.map(Ok).unwrap_or_else(|| calibrated(HorseshoeKind::Horseshoe))?
    } else {
        (1.0, 1.0, 1.0)
    };
    let eta_rhs = if needs_rhs {
        explicit.map(Ok).unwrap_or_else(|| calibrated(HorseshoeKind::RegHorseshoe))?
    } else {
        (1.0, 1.0, 1.0)
    };
    cfg.simulate
        .methods
        .iter()
        .map(|name| Ok((name.clone(), method_prior(name, phi, d_max, eta_hs, eta_rhs)?)))
        .collect()
}

fn write_records_csv(report: &StudyReport, k: usize, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "scenario,method,rep,dataset_hash,failed,rmse,rmse_alt,divergences")?;
    write!(f, ",size_true,size_est,non_null,sens,spec,ppv,npv")?;
    for block in ["e0", "ed50", "emax", "pred"] {
        for g in 1..=k {
            write!(f, ",sel_{block}_x{g}")?;
        }
    }
    writeln!(f)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.records {
        write!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.scenario,
            r.method,
            r.rep,
            r.dataset_hash,
            r.failed,
            opt(r.rmse),
            opt(r.rmse_alt),
            r.divergences
        )?;
        match &r.metrics {
            Some(m) => write!(
                f,
                ",{},{},{},{},{},{},{}",
                m.size_true,
                m.size_est,
                m.non_null,
                opt(m.sens),
                opt(m.spec),
                opt(m.ppv),
                opt(m.npv)
            )?,
            None => write!(f, ",,,,,,,")?,
        }
        for flags in [&r.selected_e0, &r.selected_ed50, &r.selected_emax, &r.selected_pred] {
            for &b in flags.iter() {
                write!(f, ",{}", b as u8)?;
            }
        }
        writeln!(f)?;
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let sim = &cfg.simulate;
    let scenarios: Vec<ScenarioSpec> = sim
        .scenarios
        .iter()
        .map(|s| ScenarioSpec::new(ScenarioKind::from_name(s)?, sim.n, sim.k))
        .collect::<Result<_>>()?;
    let methods = simulate_priors(cfg, sim.k)?;
    let study_cfg = StudyConfig {
        reps: sim.reps,
        base_seed: cfg.mcmc.seed,
        mcmc: sampler_config(cfg),
        psi: cfg.subgroup.psi,
        omega: cfg.subgroup.omega,
        hpd_level: cfg.subgroup.hpd_level,
    };
    let report = simulation::run_study(&scenarios, &methods, &study_cfg)?;
    write_records_csv(&report, sim.k, &out_path(cfg, "simulation_records.csv"))?;
    std::fs::write(
        out_path(cfg, "simulation_aggregate.json"),
        serde_json::to_string_pretty(&report.aggregates)?,
    )?;
    write_manifest(cfg, "simulate", None, serde_json::json!({"study": study_cfg}))?;
    for a in &report.aggregates {
        println!(
            "{} / {}: {} reps ({} failed), mean RMSE {}",
            a.scenario,
            a.method,
            a.reps,
            a.failures,
            a.mean_rmse.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let posterior_path = out_path(cfg, "posterior.csv");
    let records_path = out_path(cfg, "simulation_records.csv");
    let mut produced = Vec::new();

    if posterior_path.exists() {
        let data = load_data(cfg)?;
        let samples = PosteriorSamples::from_csv(&posterior_path, &data)?;
        dose_response_summary(&data, &out_path(cfg, "dose_response_summary.csv"))?;
        patient_curves(&samples, &data, &out_path(cfg, "patient_curves.csv"))?;
        produced.push("dose_response_summary.csv");
        produced.push("patient_curves.csv");
    }
    if records_path.exists() {
        rmse_distribution(&records_path, &out_path(cfg, "rmse_distribution.csv"))?;
        produced.push("rmse_distribution.csv");
    }
    if produced.is_empty() {
        return Err(Error::Data(format!(
            "nothing to report: expected {} or {} from a previous run",
            posterior_path.display(),
            records_path.display()
        )));
    }
    println!("wrote {}", produced.join(", "));
    Ok(())
}

/// Per-dose observed mean response with a 90% normal-theory interval.
fn dose_response_summary(data: &TrialDataset, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "dose,n,mean,lower90,upper90")?;
    let z = 1.6448536269514722;
    for &d in data.dose_levels() {
        let ys: Vec<f64> = data
            .doses()
            .iter()
            .zip(data.responses())
            .filter(|(dd, _)| **dd == d)
            .map(|(_, y)| *y)
            .collect();
        let n = ys.len();
        let mean = stats::mean(&ys);
        let se = if n > 1 { stats::sample_sd(&ys) / (n as f64).sqrt() } else { 0.0 };
        writeln!(f, "{d},{n},{mean},{},{}", mean - z * se, mean + z * se)?;
    }
    Ok(())
}

/// Posterior median response curve per patient on a 100-point dose grid.
fn patient_curves(samples: &PosteriorSamples, data: &TrialDataset, path: &Path) -> Result<()> {
    let grid: Vec<f64> =
        (0..100).map(|j| data.d_max() * j as f64 / 99.0).collect();
    let s = samples.n_rows();
    let p = data.p();
    let col = |name: &str| -> Result<Vec<f64>> {
        samples
            .column_by_name(name)
            .ok_or_else(|| Error::Data(format!("posterior lacks column {name}")))
    };
    let alpha_e0 = col("alpha_e0")?;
    let alpha_emax = col("alpha_emax")?;
    let ed50 = col("ed50")?;
    let h = col("h")?;
    let beta_cols: Vec<Option<usize>> =
        (0..p).map(|j| samples.idx(&format!("beta_{}", data.column_names()[j]))).collect();
    let gamma_cols: Vec<Option<usize>> =
        (0..p).map(|j| samples.idx(&format!("gamma_{}", data.column_names()[j]))).collect();
    let delta_cols: Vec<Option<usize>> =
        (0..p).map(|j| samples.idx(&format!("delta_{}", data.column_names()[j]))).collect();

    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "patient,dose,mu_median")?;
    let mut mu = vec![0.0; s];
    for i in 0..data.n() {
        let x = data.x_row(i);
        // per-draw patient parameters
        let mut e0 = alpha_e0.clone();
        let mut em = alpha_emax.clone();
        let mut l: Vec<f64> = ed50.iter().map(|v| v.ln()).collect();
        for j in 0..p {
            if let Some(c) = beta_cols[j] {
                for (draw, v) in e0.iter_mut().enumerate() {
                    *v += x[j] * samples.value(draw, c);
                }
            }
            if let Some(c) = gamma_cols[j] {
                for (draw, v) in em.iter_mut().enumerate() {
                    *v += x[j] * samples.value(draw, c);
                }
            }
            if let Some(c) = delta_cols[j] {
                for (draw, v) in l.iter_mut().enumerate() {
                    *v += x[j] * samples.value(draw, c);
                }
            }
        }
        for &d in &grid {
            for draw in 0..s {
                mu[draw] = e0[draw] + em[draw] * emax::treatment_fraction(d, l[draw], h[draw]);
            }
            writeln!(f, "{i},{d},{}", stats::median(&mu))?;
        }
    }
    Ok(())
}

/// Per-method RMSE distribution from the tidy simulation records.
fn rmse_distribution(records: &Path, path: &Path) -> Result<()> {
    let mut reader = csv::Reader::from_path(records)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", records.display())))?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (Some(c_scen), Some(c_meth), Some(c_rep), Some(c_rmse)) =
        (find("scenario"), find("method"), find("rep"), find("rmse"))
    else {
        return Err(Error::Data("simulation records lack expected columns".into()));
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "scenario,method,rep,rmse")?;
    for record in reader.records() {
        let record = record?;
        if record[c_rmse].is_empty() {
            continue;
        }
        writeln!(f, "{},{},{},{}", &record[c_scen], &record[c_meth], &record[c_rep], &record[c_rmse])?;
    }
    Ok(())
}
