//! Experiment configuration, read from TOML. Every section and key is
//! optional; unknown keys are rejected by name.
//!
//! ```toml
//! seed = 7
//! output_dir = "results"
//! format = "csv"          # or "json"
//! plots = true
//!
//! [topology]              # profit-ratio and duopoly sweeps
//! kind = "preferential_attachment"   # or "poisson_tree"
//! n = 500
//! mu_grid = [0.0, 0.5, 1.0]
//! pa_exponents = [3.0]
//! lambdas = [1.0, 3.0, 5.0]
//! replicates = 50
//! # utility_beta = 3.0    # default: the PA exponent, or |G|/20 for trees
//!
//! [duopoly]
//! tol = 1e-6
//! max_rounds = 25
//! truncated_rounds = 3
//!
//! [fairness]
//! n = 50
//! mu = 0.5
//!
//! [binary]
//! n = 12
//! instances = 10
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binary::DEFAULT_DEVIATION;
use crate::error::{Error, Result};
use crate::monopoly::PricingScenario;
use crate::network::TopologyKind;
use crate::oligopoly::{
    ExternalityView, PartitionScheme, UpdateSchedule, DEFAULT_MARKET_TOL, DEFAULT_MAX_ROUNDS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ProfitRatioSweepPa,
    ProfitRatioSweepTree,
    DuopolyProfitRatio,
    PriceVsCentrality,
    TotalCostFairness,
    BinaryPricingStudy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

fn default_mu_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySweep {
    pub kind: TopologyKind,
    pub n: usize,
    pub mu_grid: Vec<f64>,
    pub pa_exponents: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub replicates: usize,
    pub utility_beta: Option<f64>,
    pub alpha: f64,
    pub cost: f64,
    pub edges_per_node: usize,
}

impl Default for TopologySweep {
    fn default() -> Self {
        Self {
            kind: TopologyKind::PreferentialAttachment,
            n: 500,
            mu_grid: default_mu_grid(),
            pa_exponents: vec![3.0],
            lambdas: vec![1.0, 3.0, 5.0],
            replicates: 50,
            utility_beta: None,
            alpha: 2.0,
            cost: 0.5,
            edges_per_node: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuopolyParams {
    pub scenario: PricingScenario,
    pub tol: f64,
    pub max_rounds: usize,
    /// Rounds kept for the truncated comparison.
    pub truncated_rounds: usize,
    pub partition: PartitionScheme,
    pub view: ExternalityView,
    pub schedule: UpdateSchedule,
    pub rounding_trials: usize,
}

impl Default for DuopolyParams {
    fn default() -> Self {
        Self {
            scenario: PricingScenario::Differentiated,
            tol: DEFAULT_MARKET_TOL,
            max_rounds: DEFAULT_MAX_ROUNDS,
            truncated_rounds: 3,
            partition: PartitionScheme::RandomEqual,
            view: ExternalityView::Full,
            schedule: UpdateSchedule::Simultaneous,
            rounding_trials: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessParams {
    pub n: usize,
    pub mu: f64,
    pub pa_exponent: f64,
    /// Curvature on PA instances; trees use `|G|/20`.
    pub pa_beta: f64,
    pub lambda: f64,
    pub instances: usize,
    pub deviation: f64,
    pub rounding_trials: usize,
}

impl Default for FairnessParams {
    fn default() -> Self {
        Self {
            n: 50,
            mu: 0.5,
            pa_exponent: 3.0,
            pa_beta: 3.0,
            lambda: 3.0,
            instances: 1,
            deviation: DEFAULT_DEVIATION,
            rounding_trials: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinaryParams {
    pub n: usize,
    pub mu: f64,
    pub pa_exponent: f64,
    pub utility_beta: Option<f64>,
    pub instances: usize,
    pub deviation: f64,
    pub rounding_trials: usize,
}

impl Default for BinaryParams {
    fn default() -> Self {
        Self {
            n: 12,
            mu: 0.5,
            pa_exponent: 3.0,
            utility_beta: None,
            instances: 10,
            deviation: DEFAULT_DEVIATION,
            rounding_trials: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment run by the `run` subcommand.
    pub experiment: Option<ExperimentKind>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
    pub plots: bool,
    pub topology: TopologySweep,
    pub duopoly: DuopolyParams,
    pub fairness: FairnessParams,
    pub binary: BinaryParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            output_dir: PathBuf::from("results"),
            format: OutputFormat::Csv,
            plots: false,
            topology: TopologySweep::default(),
            duopoly: DuopolyParams::default(),
            fairness: FairnessParams::default(),
            binary: BinaryParams::default(),
        }
    }
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Dotted key of the assignment on the line containing byte `pos`.
fn key_at(text: &str, pos: usize) -> String {
    let before = &text[..pos.min(text.len())];
    let line = before.rsplit('\n').next().unwrap_or("");
    let key = line.split('=').next().unwrap_or("").trim();
    let section = before
        .lines()
        .rev()
        .skip(1)
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim());
    match section {
        Some(sec) if !key.is_empty() => format!("{sec}.{key}"),
        _ => key.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let key = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("unknown field"))
                .map(str::to_string)
                .or_else(|| e.span().map(|span| key_at(text, span.start)))
                .unwrap_or_default();
            config_error(&key, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        if t.mu_grid.is_empty() || t.mu_grid.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(config_error("topology.mu_grid", "values must lie in [0, 1]"));
        }
        if t.replicates == 0 {
            return Err(config_error("topology.replicates", "must be >= 1"));
        }
        if t.n < 3 {
            return Err(config_error("topology.n", "must be >= 3"));
        }
        if t.pa_exponents.iter().any(|e| !(*e >= 2.0)) {
            return Err(config_error("topology.pa_exponents", "exponents must be >= 2"));
        }
        if t.lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(config_error("topology.lambdas", "values must be > 0"));
        }
        if let Some(b) = t.utility_beta {
            if !(b > 0.0) {
                return Err(config_error("topology.utility_beta", "must be > 0"));
            }
        }
        let d = &self.duopoly;
        if !(d.tol > 0.0) {
            return Err(config_error("duopoly.tol", "must be > 0"));
        }
        if d.max_rounds == 0 {
            return Err(config_error("duopoly.max_rounds", "must be >= 1"));
        }
        if d.rounding_trials == 0 {
            return Err(config_error("duopoly.rounding_trials", "must be >= 1"));
        }
        let f = &self.fairness;
        if !(0.0..=1.0).contains(&f.mu) {
            return Err(config_error("fairness.mu", "must lie in [0, 1]"));
        }
        if f.n < 3 {
            return Err(config_error("fairness.n", "must be >= 3"));
        }
        if f.instances == 0 {
            return Err(config_error("fairness.instances", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&f.deviation) {
            return Err(config_error("fairness.deviation", "must lie in [0, 1)"));
        }
        let b = &self.binary;
        if !(0.0..=1.0).contains(&b.mu) {
            return Err(config_error("binary.mu", "must lie in [0, 1]"));
        }
        if b.n < 3 {
            return Err(config_error("binary.n", "must be >= 3"));
        }
        if b.instances == 0 {
            return Err(config_error("binary.instances", "must be >= 1"));
        }
        if b.rounding_trials == 0 {
            return Err(config_error("binary.rounding_trials", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&b.deviation) {
            return Err(config_error("binary.deviation", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.topology.mu_grid.len(), 11);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 4\nformat = \"json\"\n[topology]\nkind = \"poisson_tree\"\nreplicates = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.format, OutputFormat::Json);
        assert_eq!(cfg.topology.kind, TopologyKind::PoissonTree);
        assert_eq!(cfg.topology.replicates, 3);
        assert_eq!(cfg.topology.n, 500);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml("[topology]\nreplicas = 3\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "replicas"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_is_named() {
        let err = ExperimentConfig::from_toml("[topology]\nmu_grid = [0.0, 1.5]\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "topology.mu_grid"));
        let err = ExperimentConfig::from_toml("seed = \"x\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "seed"), "{err:?}");
        let err = ExperimentConfig::from_toml("[duopoly]\ntol = \"small\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "duopoly.tol"), "{err:?}");
    }
}
