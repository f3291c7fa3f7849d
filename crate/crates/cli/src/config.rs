//! Experiment configuration: a TOML file with `[gaussian]`, `[nonparam]`,
//! `[train]`, `[pretrain]`, `[metrics]` and `[output]` sections.
//!
//! Every field has a default, unknown keys are rejected, and the fully
//! resolved configuration is written next to each run's outputs.

use crate::error::{CliError, CliResult};
use reglab::energy::{EnergyConfig, EnergyKind};
use reglab::gaussian::{GaussianSpec, SweepAxis};
use reglab::nonparam::{Divergence, DEFAULT_GRID_POINTS, DEFAULT_QUAD_NODES, DEFAULT_TOL};
use reglab::toy::{Perturbation, ToyFamily};
use reglab::trainer::{PretrainConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub gaussian: GaussianSection,
    pub nonparam: NonparamSection,
    pub train: TrainSection,
    pub pretrain: PretrainSection,
    pub metrics: MetricsSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Beta,
    SampleSize,
    Bias,
}

impl From<Axis> for SweepAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::Beta => SweepAxis::Beta,
            Axis::SampleSize => SweepAxis::SampleSize,
            Axis::Bias => SweepAxis::Bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianSection {
    pub mu_star: f64,
    pub sigma2: f64,
    pub m: usize,
    pub mu_pre: f64,
    pub axis: Axis,
    /// Sweep values; empty selects the axis default.
    pub grid: Vec<f64>,
    /// Monte-Carlo trials per row; 0 disables the MC columns.
    pub mc_trials: usize,
    pub seed: u64,
}

impl Default for GaussianSection {
    fn default() -> Self {
        let s = GaussianSpec::default();
        Self { mu_star: s.mu_star, sigma2: s.sigma2, m: s.m, mu_pre: s.mu_pre, axis: Axis::Beta, grid: Vec::new(), mc_trials: 10_000, seed: 0 }
    }
}

impl GaussianSection {
    pub fn spec(&self) -> CliResult<GaussianSpec> {
        Ok(GaussianSpec::new(self.mu_star, self.sigma2, self.m, self.mu_pre)?)
    }

    pub fn resolved_grid(&self) -> Vec<f64> {
        if !self.grid.is_empty() {
            return self.grid.clone();
        }
        match self.axis {
            Axis::Beta => (0..=100).map(|i| i as f64 / 100.0).collect(),
            Axis::SampleSize => vec![5.0, 10.0, 20.0, 50.0, 100.0, 150.0, 200.0, 500.0, 1000.0],
            Axis::Bias => (1..=20).map(|i| i as f64 * 0.025).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyShape {
    Linear,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonparamSection {
    /// Support `[a, b]` of the uniform data density.
    pub support: [f64; 2],
    pub energy: EnergyShape,
    pub slope: f64,
    pub intercept: f64,
    /// Knots of a piecewise-linear energy (used when `energy = "tabulated"`).
    pub energy_x: Vec<f64>,
    pub energy_y: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub divergences: Vec<String>,
    pub quad_nodes: usize,
    pub tol: f64,
    pub grid_points: usize,
}

impl Default for NonparamSection {
    fn default() -> Self {
        Self {
            support: [0.0, 1.0],
            energy: EnergyShape::Linear,
            slope: 0.7,
            intercept: 0.9,
            energy_x: Vec::new(),
            energy_y: Vec::new(),
            lambdas: vec![1.0],
            divergences: vec!["kl".into(), "js".into()],
            quad_nodes: DEFAULT_QUAD_NODES,
            tol: DEFAULT_TOL,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

impl NonparamSection {
    pub fn parsed_divergences(&self) -> CliResult<Vec<Divergence>> {
        self.divergences.iter().map(|d| d.parse::<Divergence>().map_err(|e| CliError::Config(e.to_string()))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub family: String,
    pub full_size: usize,
    pub limited_m: usize,
    pub data_seed: u64,
    pub latent_dim: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub g_lr: f64,
    pub d_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub lambda: f64,
    /// When nonempty, one run per λ (overrides `lambda`).
    pub lambdas: Vec<f64>,
    pub steps: usize,
    pub eval_every: usize,
    pub n_eval: usize,
    pub energy: String,
    pub n_mc: usize,
    pub entropy_sign: f64,
    /// Weight file of a frozen extractor; required when any λ > 0.
    pub extractor_path: Option<String>,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            family: ToyFamily::Ring8.name().into(),
            full_size: 5000,
            limited_m: 64,
            data_seed: 0,
            latent_dim: t.latent_dim,
            g_hidden: t.g_hidden,
            d_hidden: t.d_hidden,
            g_lr: t.g_lr,
            d_lr: t.d_lr,
            beta1: t.beta1,
            beta2: t.beta2,
            batch_size: t.batch_size,
            lambda: t.lambda,
            lambdas: Vec::new(),
            steps: t.steps,
            eval_every: t.eval_every,
            n_eval: t.n_eval,
            energy: t.energy.kind.name().into(),
            n_mc: t.energy.n_mc,
            entropy_sign: t.energy.entropy_sign,
            extractor_path: None,
            seed: t.seed,
        }
    }
}

impl TrainSection {
    pub fn family(&self) -> CliResult<ToyFamily> {
        ToyFamily::parse(&self.family).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let kind = EnergyKind::parse(&self.energy).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(TrainConfig {
            latent_dim: self.latent_dim,
            g_hidden: self.g_hidden.clone(),
            d_hidden: self.d_hidden.clone(),
            g_lr: self.g_lr,
            d_lr: self.d_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            batch_size: self.batch_size,
            lambda: self.lambda,
            steps: self.steps,
            energy: EnergyConfig { kind, n_mc: self.n_mc, entropy_sign: self.entropy_sign },
            seed: self.seed,
            eval_every: self.eval_every,
            n_eval: self.n_eval,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub family: String,
    pub hidden: Vec<usize>,
    pub aux_size: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub rotation: f64,
    pub scale: f64,
    pub noise_scale: f64,
    /// 1-based layer used as features; 0 selects the last hidden layer.
    pub feature_layer: usize,
    pub seed: u64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let p = PretrainConfig::default();
        Self {
            family: ToyFamily::Ring8.name().into(),
            hidden: p.hidden,
            aux_size: p.aux_size,
            steps: p.steps,
            batch_size: p.batch_size,
            lr: p.lr,
            rotation: p.perturbation.rotation,
            scale: p.perturbation.scale,
            noise_scale: p.perturbation.noise_scale,
            feature_layer: 0,
            seed: 0,
        }
    }
}

impl PretrainSection {
    pub fn family(&self) -> CliResult<ToyFamily> {
        ToyFamily::parse(&self.family).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            hidden: self.hidden.clone(),
            aux_size: self.aux_size,
            steps: self.steps,
            batch_size: self.batch_size,
            lr: self.lr,
            perturbation: Perturbation { rotation: self.rotation, scale: self.scale, noise_scale: self.noise_scale },
            feature_layer: (self.feature_layer > 0).then_some(self.feature_layer),
        }
    }
}

/// Inputs of the `metrics` subcommand: two CSV files of 2-D points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub real: Option<String>,
    pub fake: Option<String>,
    /// RBF bandwidth; absent selects the median heuristic.
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), plot: false }
    }
}

/// Name of the resolved-config copy written into every output directory.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

impl ExperimentConfig {
    /// Parses TOML text; errors carry the line and column of the offending key.
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Applies a `--seed` override to every seeded section.
    pub fn override_seed(&mut self, seed: u64) {
        self.gaussian.seed = seed;
        self.train.seed = seed;
        self.pretrain.seed = seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults_and_resolved_text_round_trips() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let mut custom = cfg.clone();
        custom.metrics.bandwidth = Some(0.5);
        custom.train.extractor_path = Some("ext.txt".into());
        custom.override_seed(9);
        assert_eq!(ExperimentConfig::parse(&custom.to_toml()).unwrap(), custom);
    }

    #[test]
    fn sections_convert_to_library_types() {
        let cfg = ExperimentConfig::parse("[train]\nenergy = \"entropy_min\"\nlambda = 0.1\n[nonparam]\ndivergences = [\"JS\"]\n").unwrap();
        let tc = cfg.train.train_config().unwrap();
        assert_eq!(tc.energy.kind, EnergyKind::EntropyMin);
        assert_eq!(tc.lambda, 0.1);
        assert_eq!(cfg.nonparam.parsed_divergences().unwrap(), vec![Divergence::Js]);
        assert_eq!(cfg.pretrain.pretrain_config(), PretrainConfig::default());
        assert_eq!(cfg.gaussian.spec().unwrap(), GaussianSpec::default());
        assert_eq!(cfg.gaussian.resolved_grid().len(), 101);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let cfg = ExperimentConfig::parse("[train]\nenergy = \"nope\"\n").unwrap();
        assert!(matches!(cfg.train.train_config(), Err(CliError::Config(_))));
        assert!(matches!(ExperimentConfig::parse("[output]\nplot = 3\n"), Err(CliError::Config(m)) if m.contains("line 2")));
    }
}
