//! Argument parsing and dispatch for the `dualrej` binary.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use dualrej::pipeline::RejectionMode;
use serde::de::DeserializeOwned;

use crate::commands::{self, PredictInput};
use crate::config::{ForecasterKind, Overrides, RunConfig, OUT_DIR_ENV};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dualrej", version, about = "Selective time-series forecasting with ambiguity and novelty rejection")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Reuse the configuration recorded in a stage manifest.
    #[arg(long, global = true, conflicts_with = "config")]
    pub manifest: Option<PathBuf>,
    /// Output directory (overrides DUALREJ_OUT_DIR and the file).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Input CSV (first column is the time label).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// ridge | mlp | external
    #[arg(long, global = true, value_parser = parse_snake::<ForecasterKind>)]
    pub forecaster: Option<ForecasterKind>,
    /// dual | ambiguity_only | novelty_only | none
    #[arg(long, global = true, value_parser = parse_snake::<RejectionMode>)]
    pub mode: Option<RejectionMode>,
    #[arg(long, global = true)]
    pub target_rate: Option<f64>,
    /// Interval width W for the variance threshold.
    #[arg(long, global = true)]
    pub width: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize, window and split the data.
    Prepare,
    /// Fit the forecaster, the VAE and the error-variance model.
    Train,
    /// Set both thresholds on the validation split.
    Calibrate,
    /// Risk report on the test split.
    Evaluate,
    /// Recalibrate per target rate and evaluate each.
    Sweep,
    /// Base / NRO / ARO / DRM at the configured target rate.
    Ablate,
    /// Decision, scores and forecast for one window, as JSON.
    Predict {
        #[arg(long, conflicts_with = "input", required_unless_present = "input")]
        origin: Option<usize>,
        /// CSV with exactly `input_len` rows in the raw data layout.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// prepare, train, calibrate, evaluate, sweep and ablate in order.
    All,
    /// Write the bundled synthetic series as CSV.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long, default_value_t = 0)]
        synth_seed: u64,
        /// Leave out the mean-shifted segment.
        #[arg(long)]
        no_shift: bool,
    },
    /// Print the resolved configuration as TOML.
    ShowConfig,
}

fn parse_snake<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out_dir.clone(),
            seed: self.seed,
            data: self.data.clone(),
            forecaster: self.forecaster,
            mode: self.mode,
            target_rate: self.target_rate,
            width: self.width,
            lambda: self.lambda,
        }
    }

    /// Flags over `DUALREJ_OUT_DIR` over the file (or manifest) over defaults.
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let file = match (&self.config, &self.manifest) {
            (Some(path), _) => Some(RunConfig::from_file(path)?),
            (None, Some(path)) => Some(commands::read_manifest(path)?.run_config()),
            (None, None) => None,
        };
        let env = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
        RunConfig::resolve(file, env, &self.overrides())
    }
}

fn print_json<S: serde::Serialize>(value: &S) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.resolve_config()?;
    match &cli.command {
        Command::Prepare => print_json(&commands::cmd_prepare(&cfg)?),
        Command::Train => print_json(&commands::cmd_train(&cfg)?),
        Command::Calibrate => print_json(&commands::cmd_calibrate(&cfg)?),
        Command::Evaluate => print_json(&commands::cmd_evaluate(&cfg)?),
        Command::Sweep => print_json(&commands::cmd_sweep(&cfg)?),
        Command::Ablate => print_json(&commands::cmd_ablate(&cfg)?),
        Command::Predict { origin, input } => {
            let input = match (origin, input) {
                (Some(o), _) => PredictInput::Origin(*o),
                (None, Some(p)) => PredictInput::File(p.clone()),
                (None, None) => return Err(CliError::Config("predict needs --origin or --input".into())),
            };
            print_json(&commands::cmd_predict(&cfg, &input)?);
        }
        Command::All => print_json(&commands::cmd_all(&cfg)?),
        Command::Synth {
            output,
            length,
            synth_seed,
            no_shift,
        } => {
            let mut syn = cfg.data.synthetic;
            if let Some(n) = length {
                syn.length = *n;
            }
            if *no_shift {
                syn = syn.without_ood();
            }
            commands::cmd_synth(output, &syn, *synth_seed)?;
        }
        Command::ShowConfig => {
            print!("{}", toml::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?);
        }
    }
    Ok(())
}
