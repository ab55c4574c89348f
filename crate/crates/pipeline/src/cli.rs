//! Argument parsing and subcommand dispatch for the `spev` binary.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Estimator, LoadedConfig};
use crate::error::PipelineError;
use crate::stages;

#[derive(Debug, Parser)]
#[command(name = "spev", version, about = "Entropy-based expressway visibility estimation")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Restrict per-camera stages to one camera.
    #[arg(long, global = true)]
    pub camera: Option<String>,
    /// Output directory; overrides `output_dir` (for `synth`, the corpus directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for synthetic data.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Mirror the entropy ratio about the configured interval before the model.
    #[arg(long, global = true)]
    pub flip: Option<Switch>,
    /// 3x3 median de-noising before entropy.
    #[arg(long, global = true)]
    pub denoise: Option<Switch>,
    /// Which estimators `estimate` and `eval` run.
    #[arg(long, global = true)]
    pub estimator: Option<Estimator>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Detect lane lines, build the ROI and calibrate row distances.
    Calibrate,
    /// Clear-day entropy baseline.
    Baseline,
    /// Per-frame entropy ratio and visibility estimates.
    Estimate,
    /// Fit the piecewise model on the training cameras.
    Fit,
    /// Leave-one-camera-out evaluation of the test cameras.
    Eval,
    /// Write a synthetic foggy corpus and a config for it.
    Synth,
    /// Run the annotation service over the configured cameras.
    Serve,
}

impl Cli {
    /// Loads the config (defaults for `synth` when none is given) and applies
    /// flag overrides.
    pub fn load_config(&self) -> Result<LoadedConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => LoadedConfig::from_file(p)?,
            None if self.command == Command::Synth => LoadedConfig::from_str("", Path::new("."))?,
            None => return Err(PipelineError::Usage("--config is required".into())),
        };
        let c = &mut cfg.config;
        if let Some(s) = self.flip {
            c.flip.enabled = s == Switch::On;
        }
        if let Some(s) = self.denoise {
            c.preprocess.denoise = s == Switch::On;
        }
        if let Some(e) = self.estimator {
            c.eval.estimator = e;
        }
        if let Some(seed) = self.seed {
            c.synth.seed = seed;
        }
        if let Some(out) = &self.out {
            // A command-line path is relative to the working directory.
            c.output_dir = std::path::absolute(out).map_err(|e| PipelineError::Usage(e.to_string()))?;
        }
        Ok(cfg)
    }

    fn cameras(&self, cfg: &LoadedConfig) -> Result<Vec<String>, PipelineError> {
        match &self.camera {
            Some(id) => Ok(vec![cfg.camera(id)?.id.clone()]),
            None if cfg.config.cameras.is_empty() => Err(PipelineError::Usage("the config lists no cameras".into())),
            None => Ok(cfg.config.cameras.iter().map(|c| c.id.clone()).collect()),
        }
    }
}

/// Runs one command; returns the paths written.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, PipelineError> {
    let cfg = cli.load_config()?;
    let per_camera = |f: fn(&LoadedConfig, &str) -> Result<PathBuf, PipelineError>| {
        cli.cameras(&cfg)?
            .iter()
            .map(|c| f(&cfg, c))
            .collect::<Result<Vec<_>, _>>()
    };
    match cli.command {
        Command::Calibrate => per_camera(stages::run_calibrate),
        Command::Baseline => per_camera(stages::run_baseline),
        Command::Estimate => per_camera(stages::run_estimate),
        Command::Fit => Ok(vec![stages::run_fit(&cfg)?]),
        Command::Eval => stages::run_eval(&cfg),
        Command::Synth => {
            let out = cfg.output_dir();
            Ok(vec![stages::run_synth(&cfg, &out)?])
        }
        Command::Serve => {
            crate::serve::run(&cfg, &cli.cameras(&cfg)?)?;
            Ok(vec![])
        }
    }
}

/// Full CLI entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("spev: {e}");
            e.exit_code()
        }
    }
}
