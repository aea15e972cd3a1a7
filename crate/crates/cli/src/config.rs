//! Experiment configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    /// Directory holding the dataset CSVs; defaults to the output directory.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Mnp {
        alternatives: usize,
        factors: usize,
    },
    LinearGaussian {
        sigma_z: f64,
        sigma_y: f64,
        #[serde(default)]
        prior_mean: f64,
        /// `None` gives a flat prior.
        #[serde(default)]
        prior_var: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    #[serde(default)]
    pub design: Design,
    /// Probit coefficients; drawn from the seed when absent.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    /// Probit angles; drawn from the seed when absent.
    #[serde(default)]
    pub kappa: Option<Vec<f64>>,
    /// Linear-Gaussian θ; drawn from the seed when absent.
    #[serde(default)]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Design {
    /// Alternative-specific intercepts plus the log price relative to the
    /// outside option.
    InterceptLogPrice {
        #[serde(default = "default_log_price_sd")]
        log_price_sd: f64,
    },
    Gaussian {
        regressors: usize,
    },
}

fn default_log_price_sd() -> f64 {
    0.3
}

impl Default for Design {
    fn default() -> Self {
        Design::InterceptLogPrice {
            log_price_sd: default_log_price_sd(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Hula,
    HulaSub,
    JointUla,
    Mcmc,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Hula => "hula",
            SamplerKind::HulaSub => "hula-sub",
            SamplerKind::JointUla => "joint-ula",
            SamplerKind::Mcmc => "mcmc",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::from_str(name, false).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub sampler: SamplerKind,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Step size; 1/n when absent.
    pub tau: Option<f64>,
    /// Preconditioner diagonal; the model default when absent.
    pub precond: Option<Vec<f64>>,
    pub draws_per_step: usize,
    /// Subsample size as a fraction of n, for `hula-sub`.
    pub subsample: f64,
    /// Initial random-walk scale of the angle blocks, for `mcmc`.
    pub proposal_sd: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::Hula,
            iterations: 10_000,
            burn_in: 1_000,
            thin: 1,
            tau: None,
            precond: None,
            draws_per_step: 1,
            subsample: 0.2,
            proposal_sd: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Samplers whose draws files are reported.
    pub chains: Vec<SamplerKind>,
    /// Denominator chain of the ESS ratios.
    pub reference: Option<SamplerKind>,
    pub max_lag: usize,
    /// Parameter draws used for predictive probabilities, evenly thinned.
    pub predictive_draws: usize,
    /// 0-based regressor varied along the price grid; the last one when absent.
    pub price_column: Option<usize>,
    /// Grid endpoints; the observed range of the price column when absent.
    pub price_range: Option<(f64, f64)>,
    pub grid_points: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            chains: vec![SamplerKind::Hula],
            reference: None,
            max_lag: hula_core::diagnostics::DEFAULT_MAX_LAG,
            predictive_draws: 1000,
            price_column: None,
            price_range: None,
            grid_points: 10,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.into(),
            source,
        })?;
        let config: Config =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |field: &str, msg: &str| Err(CliError::Config(format!("{field}: {msg}")));
        match &self.model {
            ModelConfig::Mnp { alternatives, factors } => {
                if *alternatives == 0 {
                    return bad("model.alternatives", "must be at least 1");
                }
                if *factors == 0 || factors > alternatives {
                    return bad("model.factors", "must lie in 1..=alternatives");
                }
            }
            ModelConfig::LinearGaussian {
                sigma_z,
                sigma_y,
                prior_var,
                ..
            } => {
                if !(*sigma_z > 0.0) {
                    return bad("model.sigma_z", "must be positive");
                }
                if !(*sigma_y >= 0.0) {
                    return bad("model.sigma_y", "must be non-negative");
                }
                if prior_var.is_some_and(|v| !(v > 0.0)) {
                    return bad("model.prior_var", "must be positive");
                }
            }
        }
        if let Some(sim) = &self.simulate {
            if sim.n == 0 {
                return bad("simulate.n", "must be positive");
            }
            if let Design::Gaussian { regressors: 0 } = sim.design {
                return bad("simulate.design.regressors", "must be positive");
            }
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction <= 1.0) {
            return bad("split.train_fraction", "must lie in (0, 1]");
        }
        let fit = &self.fit;
        if fit.iterations == 0 {
            return bad("fit.iterations", "must be positive");
        }
        if fit.burn_in >= fit.iterations {
            return bad("fit.burn_in", "must be smaller than fit.iterations");
        }
        if fit.thin == 0 {
            return bad("fit.thin", "must be positive");
        }
        if fit.draws_per_step == 0 {
            return bad("fit.draws_per_step", "must be positive");
        }
        if fit.tau.is_some_and(|t| !(t > 0.0)) {
            return bad("fit.tau", "must be positive");
        }
        if !(fit.subsample > 0.0 && fit.subsample <= 1.0) {
            return bad("fit.subsample", "must lie in (0, 1]");
        }
        if !(fit.proposal_sd > 0.0) {
            return bad("fit.proposal_sd", "must be positive");
        }
        if self.report.predictive_draws == 0 {
            return bad("report.predictive_draws", "must be positive");
        }
        if self.report.grid_points == 0 {
            return bad("report.grid_points", "must be positive");
        }
        if self.report.chains.is_empty() {
            return bad("report.chains", "must name at least one sampler");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form. Object keys are sorted, so the
    /// digest does not depend on the field order of the source file.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut text = String::new();
        write_canonical(&value, &mut text);
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn data_dir<'a>(&'a self, out: &'a Path) -> &'a Path {
        self.data_dir.as_deref().unwrap_or(out)
    }
}

fn write_canonical(value: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "seed": 7,
        "model": {"kind": "mnp", "alternatives": 3, "factors": 1},
        "simulate": {"n": 100, "design": {"kind": "intercept_log_price", "log_price_sd": 0.3}},
        "fit": {"sampler": "hula-sub", "iterations": 200, "burn_in": 50}
    }"#;

    fn parse(text: &str) -> serde_json::Result<Config> {
        serde_json::from_str(text)
    }

    #[test]
    fn parses_and_fills_defaults() {
        let c = parse(BASE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.fit.sampler, SamplerKind::HulaSub);
        assert_eq!(c.fit.thin, 1);
        assert_eq!(
            c.split,
            SplitConfig {
                train_fraction: 0.8,
                seed: 0
            }
        );
        assert_eq!(c.report.max_lag, 1000);
    }

    #[test]
    fn rejects_unknown_keys_at_every_level() {
        assert!(parse(&BASE.replace("\"seed\": 7", "\"seed\": 7, \"sed\": 1")).is_err());
        assert!(parse(&BASE.replace("\"factors\": 1", "\"factors\": 1, \"extra\": 2")).is_err());
        assert!(parse(&BASE.replace("\"burn_in\": 50", "\"burn_in\": 50, \"tua\": 0.1")).is_err());
        assert!(parse(&BASE.replace("hula-sub", "langevin")).is_err());
    }

    #[test]
    fn hash_ignores_field_order() {
        let reordered = r#"{
            "fit": {"burn_in": 50, "iterations": 200, "sampler": "hula-sub"},
            "simulate": {"design": {"log_price_sd": 0.3, "kind": "intercept_log_price"}, "n": 100},
            "model": {"factors": 1, "alternatives": 3, "kind": "mnp"},
            "seed": 7
        }"#;
        let (a, b) = (parse(BASE).unwrap(), parse(reordered).unwrap());
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 8;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn field_level_validation_messages() {
        let mut c = parse(BASE).unwrap();
        c.fit.burn_in = 200;
        assert!(c.validate().unwrap_err().to_string().contains("fit.burn_in"));
        let mut c = parse(BASE).unwrap();
        c.model = ModelConfig::Mnp {
            alternatives: 2,
            factors: 3,
        };
        assert!(c.validate().unwrap_err().to_string().contains("model.factors"));
        let mut c = parse(BASE).unwrap();
        c.split.train_fraction = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("split.train_fraction"));
    }
}
