//! Command-line experiments: config handling, subcommands and output writers.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use clap::{Args, Parser, Subcommand};
use config::ExperimentConfig;
use error::CliResult;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "experiment_cli", version, about = "Regularized generative modeling experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form and Monte-Carlo MSE sweep of the regularized Gaussian mean.
    GaussianSweep(Common),
    /// Solve for the optimal generator density per (divergence, lambda).
    Nonparam(Common),
    /// Train the (optionally energy-regularized) GAN on a 2-D toy dataset.
    Train(Common),
    /// MMD² and Fréchet distance between two CSV point files.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        real: Option<PathBuf>,
        #[arg(long)]
        fake: Option<PathBuf>,
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    /// Train a classifier on a perturbed toy domain and save it as a frozen feature extractor.
    PretrainExtractor(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also render SVG plots.
    #[arg(long)]
    pub plot: bool,
}

impl Common {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.display().to_string();
        }
        if let Some(seed) = self.seed {
            cfg.override_seed(seed);
        }
        cfg.output.plot |= self.plot;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let (common, mut cfg) = match &cli.command {
        Command::GaussianSweep(c) | Command::Nonparam(c) | Command::Train(c) | Command::PretrainExtractor(c) => (c, c.resolve()?),
        Command::Metrics { common, .. } => (common, common.resolve()?),
    };
    if let Command::Metrics { real, fake, bandwidth, .. } = &cli.command {
        if let Some(p) = real {
            cfg.metrics.real = Some(p.display().to_string());
        }
        if let Some(p) = fake {
            cfg.metrics.fake = Some(p.display().to_string());
        }
        if bandwidth.is_some() {
            cfg.metrics.bandwidth = *bandwidth;
        }
    }
    let out = commands::prepare_output(&cfg)?;
    reglab::par::with_jobs(common.jobs, || match cli.command {
        Command::GaussianSweep(_) => commands::gaussian_sweep(&cfg, &out),
        Command::Nonparam(_) => commands::nonparam(&cfg, &out),
        Command::Train(_) => commands::train(&cfg, &out),
        Command::Metrics { .. } => commands::metrics(&cfg, &out),
        Command::PretrainExtractor(_) => commands::pretrain(&cfg, &out),
    })
}
