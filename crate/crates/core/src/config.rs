//! Run configuration: one JSON document drives every pipeline stage.
//!
//! A `RunConfig` is validated before any computation touches it, and the
//! same file can be replayed to reproduce a run byte for byte: all
//! randomness derives from `seed` through named substreams, and
//! [`RunConfig::config_hash`] stamps outputs so artifacts can be traced
//! back to the exact configuration that produced them.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::ProphetConfig;
use crate::eval::ScenarioSpec;
use crate::flow::{FlowParams, LikelihoodRange};
use crate::mcmc::McmcConfig;
use crate::waiting::BetaPrior;

/// Configuration errors.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Forecast model identifiers used in output files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    /// Bayesian hierarchical multi-level moving average.
    #[serde(rename = "BHML")]
    Bhml,
    /// Frequentist same-weekday/holiday averaging.
    #[serde(rename = "BASE")]
    Base,
    /// Additive trend + seasonality + holiday model.
    #[serde(rename = "PROP")]
    Prop,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Bhml => "BHML",
            ModelKind::Base => "BASE",
            ModelKind::Prop => "PROP",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BHML" => Ok(ModelKind::Bhml),
            "BASE" => Ok(ModelKind::Base),
            "PROP" => Ok(ModelKind::Prop),
            other => Err(format!("unknown model {other:?} (expected BHML, BASE, or PROP)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the Gamma shape ν is chosen when fitting waits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NuMode {
    /// Use the given value.
    Fixed { value: f64 },
    /// Method-of-moments estimate from the training data.
    Moments,
}

/// MCMC engine settings, mirrored into [`McmcConfig`] with the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSettings {
    pub chains: usize,
    pub warmup_iters: usize,
    pub keep_iters: usize,
    pub target_accept: f64,
    pub adapt_window: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        let d = McmcConfig::default();
        McmcSettings {
            chains: d.chains,
            warmup_iters: d.warmup_iters,
            keep_iters: d.keep_iters,
            target_accept: d.target_accept,
            adapt_window: d.adapt_window,
        }
    }
}

impl McmcSettings {
    /// Engine configuration seeded for the given substream.
    pub fn to_mcmc_config(self, seed: u64) -> McmcConfig {
        McmcConfig {
            chains: self.chains,
            warmup_iters: self.warmup_iters,
            keep_iters: self.keep_iters,
            target_accept: self.target_accept,
            adapt_window: self.adapt_window,
            seed,
        }
    }
}

/// Flow parameters in plain field form for the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParamsConfig {
    pub alpha_ord: f64,
    pub alpha_sch: f64,
    pub alpha_pwe: f64,
    pub eta_sch: f64,
    pub eta_pwe: f64,
    pub sigma2_eps: f64,
}

impl FlowParamsConfig {
    pub fn to_params(self) -> Result<FlowParams, ConfigError> {
        FlowParams::new(
            self.alpha_ord,
            self.alpha_sch,
            self.alpha_pwe,
            self.eta_sch,
            self.eta_pwe,
            self.sigma2_eps,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Ground-truth generation settings for the `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    /// Number of days N.
    pub days: usize,
    /// First calendar date.
    pub start_date: NaiveDate,
    /// Inclusive school-holiday date ranges.
    #[serde(default)]
    pub school_holidays: Vec<(NaiveDate, NaiveDate)>,
    /// Public-holiday dates (weekends are derived automatically).
    #[serde(default)]
    pub public_holidays: Vec<NaiveDate>,
    /// Generating flow parameters.
    pub flow: FlowParamsConfig,
    /// Mean of the initialisation days' flows.
    pub init_mean: f64,
    /// Gamma shape of the wait stage.
    pub nu: f64,
    /// Interval rate coefficients, one per interval.
    pub beta: Vec<f64>,
    /// Wait replicates J per day and interval.
    pub replicates: usize,
}

/// Flow prediction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSettings {
    /// Forecast horizon in days beyond the training range.
    pub horizon: usize,
    /// Posterior draws consumed per prediction (thinned evenly).
    pub draws: usize,
}

impl Default for PredictSettings {
    fn default() -> Self {
        PredictSettings { horizon: 7, draws: 1000 }
    }
}

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Leading weeks excluded from the in-sample MSE sum.
    pub burn_in_weeks: usize,
    /// PE thresholds in minutes, strictly increasing.
    pub pe_deltas: Vec<f64>,
    /// Weeks pooled when widening sparse test waits.
    pub aggregation_weeks: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            burn_in_weeks: 1,
            pe_deltas: (1..=30).map(|j| j as f64 * 0.5).collect(),
            aggregation_weeks: 5,
        }
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every random stage derives a named substream from it.
    pub seed: u64,
    /// Moving-average order K.
    pub order: usize,
    /// Sub-daily interval count S.
    pub intervals: usize,
    /// Likelihood normalisation convention.
    #[serde(default)]
    pub likelihood_range: LikelihoodRange,
    /// Prior over the interval coefficients β.
    #[serde(default)]
    pub beta_prior: BetaPrior,
    /// Gamma shape policy.
    pub nu_mode: NuMode,
    /// Sampler settings shared by both fits.
    #[serde(default)]
    pub mcmc: McmcSettings,
    /// Optional train/test split applied before fitting.
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    /// Models to run; BHML is implied for fit commands.
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    /// Directory all artifacts are read from and written to.
    pub out_dir: PathBuf,
    /// Ground-truth generation (required by `simulate` only).
    #[serde(default)]
    pub simulate: Option<SimulateSettings>,
    /// Additive-model fit settings.
    #[serde(default)]
    pub prophet: ProphetConfig,
    #[serde(default)]
    pub predict: PredictSettings,
    #[serde(default)]
    pub evaluate: EvalSettings,
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Bhml, ModelKind::Base, ModelKind::Prop]
}

impl RunConfig {
    /// Parses and validates a JSON config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field before any computation runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.order == 0 {
            return bad("order K must be >= 1".into());
        }
        if self.intervals == 0 || 1440 % self.intervals != 0 {
            return bad(format!("intervals S = {} must divide 1440 evenly", self.intervals));
        }
        if let NuMode::Fixed { value } = self.nu_mode {
            if !(value > 0.0) || !value.is_finite() {
                return bad(format!("nu must be > 0, got {value}"));
            }
        }
        if let BetaPrior::Dirichlet { alpha } = &self.beta_prior {
            if alpha.len() != self.intervals {
                return bad(format!(
                    "dirichlet alpha has {} entries for {} intervals",
                    alpha.len(),
                    self.intervals
                ));
            }
        }
        self.mcmc
            .to_mcmc_config(0)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.models.is_empty() {
            return bad("model set is empty".into());
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return bad("model set contains duplicates".into());
        }
        if self.predict.horizon == 0 {
            return bad("prediction horizon must be >= 1 day".into());
        }
        if self.predict.draws == 0 {
            return bad("prediction draw count must be >= 1".into());
        }
        for pair in self.evaluate.pe_deltas.windows(2) {
            if pair[1] <= pair[0] {
                return bad("pe_deltas must be strictly increasing".into());
            }
        }
        if self.evaluate.pe_deltas.iter().any(|&d| !(d >= 0.0)) {
            return bad("pe_deltas must be non-negative".into());
        }
        if self.evaluate.aggregation_weeks == 0 {
            return bad("aggregation_weeks must be >= 1".into());
        }
        if let Some(sim) = &self.simulate {
            if sim.days == 0 {
                return bad("simulate.days must be >= 1".into());
            }
            sim.flow.to_params()?;
            if !(sim.nu > 0.0) {
                return bad(format!("simulate.nu must be > 0, got {}", sim.nu));
            }
            if sim.beta.len() != self.intervals {
                return bad(format!(
                    "simulate.beta has {} entries for {} intervals",
                    sim.beta.len(),
                    self.intervals
                ));
            }
            if sim.beta.iter().any(|&b| !(b > 0.0)) {
                return bad("simulate.beta entries must be > 0".into());
            }
            if sim.replicates == 0 {
                return bad("simulate.replicates must be >= 1".into());
            }
            if !(sim.init_mean > 0.0) {
                return bad(format!("simulate.init_mean must be > 0, got {}", sim.init_mean));
            }
            for (a, b) in &sim.school_holidays {
                if b < a {
                    return bad(format!("school holiday range {a} - {b} is reversed"));
                }
            }
        }
        Ok(())
    }

    /// Hex digest identifying this configuration: SHA-256 of the
    /// canonical JSON form, truncated to 16 characters.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// Serializes the config to pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json(out_dir: &str) -> String {
        format!(
            r#"{{
              "seed": 42,
              "order": 3,
              "intervals": 8,
              "nu_mode": {{"mode": "fixed", "value": 7.0}},
              "out_dir": "{out_dir}"
            }}"#
        )
    }

    #[test]
    fn config_round_trips_losslessly() {
        let cfg: RunConfig = serde_json::from_str(&minimal_json("/tmp/run")).unwrap();
        cfg.validate().unwrap();
        let json = cfg.to_json();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.config_hash(), back.config_hash());
    }

    #[test]
    fn defaults_are_sensible() {
        let cfg: RunConfig = serde_json::from_str(&minimal_json("/tmp/run")).unwrap();
        assert_eq!(cfg.likelihood_range, LikelihoodRange::AsPrinted);
        assert_eq!(cfg.beta_prior, BetaPrior::FlatPositive);
        assert_eq!(cfg.models, vec![ModelKind::Bhml, ModelKind::Base, ModelKind::Prop]);
        assert_eq!(cfg.mcmc.chains, 4);
        assert_eq!(cfg.predict.horizon, 7);
        assert_eq!(cfg.evaluate.burn_in_weeks, 1);
        assert_eq!(cfg.evaluate.aggregation_weeks, 5);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{
          "seed": 1, "order": 3, "intervals": 8,
          "nu_mode": {"mode": "moments"},
          "out_dir": "/tmp/x",
          "surprise": true
        }"#;
        assert!(serde_json::from_str::<RunConfig>(json).is_err());
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut cfg: RunConfig = serde_json::from_str(&minimal_json("/tmp/run")).unwrap();
        cfg.order = 0;
        assert!(cfg.validate().is_err());

        let mut cfg: RunConfig = serde_json::from_str(&minimal_json("/tmp/run")).unwrap();
        cfg.intervals = 7;
        assert!(cfg.validate().is_err());

        let mut cfg: RunConfig = serde_json::from_str(&minimal_json("/tmp/run")).unwrap();
        cfg.nu_mode = NuMode::Fixed { value: -1.0 };
        assert!(cfg.validate().is_err());

        let mut cfg: RunConfig = serde_json::from_str(&minimal_json("/tmp/run")).unwrap();
        cfg.beta_prior = BetaPrior::Dirichlet { alpha: vec![1.0; 3] };
        assert!(cfg.validate().is_err());

        let mut cfg: RunConfig = serde_json::from_str(&minimal_json("/tmp/run")).unwrap();
        cfg.models = vec![ModelKind::Base, ModelKind::Base];
        assert!(cfg.validate().is_err());

        let mut cfg: RunConfig = serde_json::from_str(&minimal_json("/tmp/run")).unwrap();
        cfg.evaluate.pe_deltas = vec![1.0, 1.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_distinguishes_configs() {
        let a: RunConfig = serde_json::from_str(&minimal_json("/tmp/run")).unwrap();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 43;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }

    #[test]
    fn model_kind_round_trips() {
        for (kind, name) in [
            (ModelKind::Bhml, "BHML"),
            (ModelKind::Base, "BASE"),
            (ModelKind::Prop, "PROP"),
        ] {
            assert_eq!(kind.as_str(), name);
            assert_eq!(name.parse::<ModelKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{name}\""));
        }
        assert!("BM25".parse::<ModelKind>().is_err());
    }

    #[test]
    fn simulate_settings_validated() {
        let json = r#"{
          "seed": 9, "order": 3, "intervals": 8,
          "nu_mode": {"mode": "fixed", "value": 7.0},
          "out_dir": "/tmp/x",
          "simulate": {
            "days": 0,
            "start_date": "2018-01-01",
            "flow": {"alpha_ord": 0.333, "alpha_sch": 0.33, "alpha_pwe": 0.331,
                     "eta_sch": 1.0, "eta_pwe": 1.0, "sigma2_eps": 5.0},
            "init_mean": 30.0,
            "nu": 7.0,
            "beta": [0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01],
            "replicates": 10
          }
        }"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("days"));
    }
}
