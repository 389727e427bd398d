//! Posterior post-processing: per-patient treatment-effect curves,
//! predictive-covariate selection via HPD intervals, and subgroup
//! identification.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::emax;
use crate::mcmc::PosteriorSamples;
use crate::stats;
use crate::{Error, Result};

/// Posterior draws of the treatment effect `Delta_i(x_i, d)` for every
/// patient at a set of doses, plus per-patient `Emax_i` draws.
#[derive(Debug, Clone)]
pub struct TreatmentEffectPosterior {
    pub doses: Vec<f64>,
    pub n_patients: usize,
    pub n_draws: usize,
    /// Laid out `[dose][patient][draw]`.
    values: Vec<f64>,
    /// Per-patient Emax draws, `[patient][draw]`.
    emax: Vec<f64>,
}

impl TreatmentEffectPosterior {
    pub fn draws_for(&self, dose_idx: usize, patient: usize) -> &[f64] {
        let base = (dose_idx * self.n_patients + patient) * self.n_draws;
        &self.values[base..base + self.n_draws]
    }

    pub fn emax_draws(&self, patient: usize) -> &[f64] {
        &self.emax[patient * self.n_draws..(patient + 1) * self.n_draws]
    }

    pub fn dose_index(&self, d: f64) -> Option<usize> {
        self.doses.iter().position(|x| *x == d)
    }
}

/// Per-group selection flags from the HPD rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSelection {
    pub group: String,
    pub on_e0: bool,
    pub on_emax: bool,
    pub on_ed50: bool,
    /// Flagged predictive when any Emax or ED50 column of the group is.
    pub predictive: bool,
}

/// Subgroup identification output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupResult {
    pub psi: f64,
    pub omega: f64,
    pub d_star: f64,
    pub members: Vec<usize>,
    /// Posterior `P(Delta_i > psi | y)` per patient.
    pub prob_exceed: Vec<f64>,
    pub non_null: bool,
}

/// Similarity of an estimated subgroup to the truth; 0/0 ratios are `None`
/// (reported as blanks/nulls).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SubgroupMetrics {
    pub sens: Option<f64>,
    pub spec: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub size_true: usize,
    pub size_est: usize,
    pub non_null: bool,
}

/// Treatment-effect draws
/// `Delta = (alpha_emax + x'gamma) d^h / (d^h + exp(alpha_ed50 + x'delta)^h)`
/// per draw, patient and dose. Exactly 0 at `d = 0`.
pub fn treatment_effect_draws(
    samples: &PosteriorSamples,
    data: &TrialDataset,
    doses: &[f64],
) -> Result<TreatmentEffectPosterior> {
    if samples.n_rows() == 0 {
        return Err(Error::InvalidInput("empty posterior".into()));
    }
    if doses.is_empty() {
        return Err(Error::InvalidInput("no doses requested".into()));
    }
    for &d in doses {
        if !(0.0..=samples.d_max).contains(&d) {
            return Err(Error::InvalidInput(format!(
                "dose {d} outside [0, {}]",
                samples.d_max
            )));
        }
    }
    let s = samples.n_rows();
    let n = data.n();
    let p = data.p();
    let alpha_emax = samples
        .column_by_name("alpha_emax")
        .ok_or_else(|| Error::InvalidInput("posterior lacks alpha_emax".into()))?;
    let ed50 = samples
        .column_by_name("ed50")
        .ok_or_else(|| Error::InvalidInput("posterior lacks ed50".into()))?;
    let h = samples
        .column_by_name("h")
        .ok_or_else(|| Error::InvalidInput("posterior lacks h".into()))?;
    // coefficient columns may be absent (covariate-free model)
    let gamma_cols: Vec<Option<usize>> =
        (0..p).map(|j| samples.idx(&format!("gamma_{}", data.column_names()[j]))).collect();
    let delta_cols: Vec<Option<usize>> =
        (0..p).map(|j| samples.idx(&format!("delta_{}", data.column_names()[j]))).collect();

    let mut values = vec![0.0; doses.len() * n * s];
    let mut emax_draws = vec![0.0; n * s];
    for draw in 0..s {
        let a_em = alpha_emax[draw];
        let log_ed50_ref = ed50[draw].ln();
        let h_s = h[draw];
        for i in 0..n {
            let x = data.x_row(i);
            let mut em = a_em;
            let mut l = log_ed50_ref;
            for j in 0..p {
                if let Some(c) = gamma_cols[j] {
                    em += x[j] * samples.value(draw, c);
                }
                if let Some(c) = delta_cols[j] {
                    l += x[j] * samples.value(draw, c);
                }
            }
            emax_draws[i * s + draw] = em;
            for (di, &d) in doses.iter().enumerate() {
                values[(di * n + i) * s + draw] = em * emax::treatment_fraction(d, l, h_s);
            }
        }
    }
    Ok(TreatmentEffectPosterior {
        doses: doses.to_vec(),
        n_patients: n,
        n_draws: s,
        values,
        emax: emax_draws,
    })
}

/// Shortest interval containing `level` posterior mass, computed as the
/// narrowest window of `ceil(level*S)` consecutive order statistics; ties go
/// to the window with the smaller left endpoint.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    let s = draws.len();
    let m = (level * s as f64).ceil() as usize;
    if s == 0 || m == 0 || m > s {
        return Err(Error::InvalidInput(format!(
            "cannot take a {level} HPD interval from {s} draws"
        )));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = (sorted[0], sorted[m - 1]);
    let mut best_width = best.1 - best.0;
    for i in 1..=s - m {
        let width = sorted[i + m - 1] - sorted[i];
        if width < best_width {
            best_width = width;
            best = (sorted[i], sorted[i + m - 1]);
        }
    }
    Ok(best)
}

/// Flag covariate groups whose effects exclude zero from the `level`-mass HPD
/// interval, per block; a group is predictive when any of its Emax or ED50
/// columns is flagged.
pub fn select_predictive(samples: &PosteriorSamples, level: f64) -> Result<Vec<GroupSelection>> {
    if samples.n_rows() < 100 {
        return Err(Error::InvalidInput(format!(
            "selection needs at least 100 draws, got {}",
            samples.n_rows()
        )));
    }
    let flagged = |col_name: &str| -> Result<bool> {
        match samples.column_by_name(col_name) {
            None => Ok(false),
            Some(draws) => {
                let (lo, hi) = hpd_interval(&draws, level)?;
                Ok(!(lo <= 0.0 && 0.0 <= hi))
            }
        }
    };
    let mut out = Vec::with_capacity(samples.groups.len());
    for group in &samples.groups {
        let mut sel = GroupSelection {
            group: group.name.clone(),
            on_e0: false,
            on_emax: false,
            on_ed50: false,
            predictive: false,
        };
        for &j in &group.columns {
            let col = &samples.group_column_names[j];
            sel.on_e0 |= flagged(&format!("beta_{col}"))?;
            sel.on_emax |= flagged(&format!("gamma_{col}"))?;
            sel.on_ed50 |= flagged(&format!("delta_{col}"))?;
        }
        sel.predictive = sel.on_emax || sel.on_ed50;
        out.push(sel);
    }
    Ok(out)
}

/// Members are patients with `P(Delta_i(x_i, d_star) > psi | y) > omega`.
pub fn identify_subgroup(
    te: &TreatmentEffectPosterior,
    d_star: f64,
    psi: f64,
    omega: f64,
) -> Result<SubgroupResult> {
    if !(0.5..=1.0).contains(&omega) {
        return Err(Error::InvalidInput(format!("omega = {omega} outside [0.5, 1]")));
    }
    let di = te
        .dose_index(d_star)
        .ok_or_else(|| Error::InvalidInput(format!("dose {d_star} not among computed doses")))?;
    let mut members = Vec::new();
    let mut prob_exceed = Vec::with_capacity(te.n_patients);
    for i in 0..te.n_patients {
        let draws = te.draws_for(di, i);
        let p = draws.iter().filter(|v| **v > psi).count() as f64 / draws.len() as f64;
        prob_exceed.push(p);
        if p > omega {
            members.push(i);
        }
    }
    let non_null = !members.is_empty();
    Ok(SubgroupResult { psi, omega, d_star, members, prob_exceed, non_null })
}

/// Sensitivity, specificity, PPV and NPV of an estimated subgroup against the
/// truth; undefined (0/0) ratios are `None`.
pub fn subgroup_metrics(estimated: &[usize], truth: &[usize], n: usize) -> SubgroupMetrics {
    let in_est: Vec<bool> = {
        let mut v = vec![false; n];
        for &i in estimated {
            v[i] = true;
        }
        v
    };
    let in_true: Vec<bool> = {
        let mut v = vec![false; n];
        for &i in truth {
            v[i] = true;
        }
        v
    };
    let mut tp = 0usize;
    let mut tn = 0usize;
    for i in 0..n {
        tp += (in_est[i] && in_true[i]) as usize;
        tn += (!in_est[i] && !in_true[i]) as usize;
    }
    let size_true = truth.len();
    let size_est = estimated.len();
    let ratio = |num: usize, den: usize| -> Option<f64> {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    SubgroupMetrics {
        sens: ratio(tp, size_true),
        spec: ratio(tn, n - size_true),
        ppv: ratio(tp, size_est),
        npv: ratio(tn, n - size_est),
        size_true,
        size_est,
        non_null: size_est > 0,
    }
}

/// Write per-patient covariates, posterior median treatment effect at
/// `d_star` and posterior median `Emax_i` as CSV for external tree tools.
pub fn tree_summary_export<P: AsRef<Path>>(
    te: &TreatmentEffectPosterior,
    data: &TrialDataset,
    d_star: f64,
    path: P,
) -> Result<()> {
    if te.n_draws == 0 {
        return Err(Error::InvalidInput("empty posterior".into()));
    }
    let di = te
        .dose_index(d_star)
        .ok_or_else(|| Error::InvalidInput(format!("dose {d_star} not among computed doses")))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for name in data.column_names() {
        write!(f, "{name},")?;
    }
    writeln!(f, "delta_median,emax_median")?;
    for i in 0..te.n_patients {
        for &x in data.x_row(i) {
            write!(f, "{x},")?;
        }
        let dm = stats::median(te.draws_for(di, i));
        let em = stats::median(te.emax_draws(i));
        writeln!(f, "{dm},{em}")?;
    }
    Ok(())
}
