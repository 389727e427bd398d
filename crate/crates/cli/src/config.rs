//! Run configuration: a TOML file with named blocks. Every field has a
//! default so minimal configs stay small; all resolved values end up in the
//! run manifest.

use std::path::Path;

use doseshrink_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub subgroup: SubgroupConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: String,
    /// Name of the dose column.
    pub dose: String,
    /// Name of the response column.
    pub response: String,
    /// Categorical covariate columns (dummy-coded against the
    /// lexicographically first level). All other columns are continuous
    /// covariates.
    pub categorical: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: String::new(),
            dose: "dose".into(),
            response: "response".into(),
            categorical: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// One of: spike_slab, horseshoe, reg_horseshoe, flat, null.
    pub family: String,
    pub dependent: bool,
    /// Spike-and-slab inclusion probability; default 2/k.
    pub phi: Option<f64>,
    pub phi_inc: f64,
    /// Global scales; either set all three or use `auto_calibrate`.
    pub eta_beta: Option<f64>,
    pub eta_gamma: Option<f64>,
    pub eta_delta: Option<f64>,
    /// Calibrate the global scales against the spike-and-slab benchmark.
    pub auto_calibrate: bool,
    /// Guesstimates feeding calibration thresholds.
    pub e0_star: Option<f64>,
    pub emax_star: Option<f64>,
    /// Derive the guesstimates from the ML pre-fit instead.
    pub prefit: bool,
    /// Monte Carlo draws per calibration probability.
    pub n_mc: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            family: "reg_horseshoe".into(),
            dependent: true,
            phi: None,
            phi_inc: 0.8,
            eta_beta: None,
            eta_gamma: None,
            eta_delta: None,
            auto_calibrate: false,
            e0_star: None,
            emax_star: None,
            prefit: false,
            n_mc: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub max_treedepth: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubgroupConfig {
    /// Treatment-effect threshold (response units).
    pub psi: f64,
    /// Posterior probability threshold in [0.5, 1].
    pub omega: f64,
    /// Reference dose; default = highest dose in the trial.
    pub d_star: Option<f64>,
    /// HPD mass for covariate selection.
    pub hpd_level: f64,
}

impl Default for SubgroupConfig {
    fn default() -> Self {
        Self { psi: 0.2, omega: 0.5, d_star: None, hpd_level: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Scenario names: null, only_prognostic, prog_and_pred, only_pred,
    /// linear, logistic, step, interaction.
    pub scenarios: Vec<String>,
    /// Method names: null, noshrink, oracle, hs, hs_dep, rhs, rhs_dep,
    /// sas, sas_dep.
    pub methods: Vec<String>,
    pub reps: usize,
    pub n: usize,
    pub k: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scenarios: vec!["prog_and_pred".into()],
            methods: vec!["rhs_dep".into()],
            reps: 50,
            n: 500,
            k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "doseshrink_out".into() }
    }
}

impl RunConfig {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
