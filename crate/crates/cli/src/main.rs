use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kernelscore_cli::commands::{self, Common, CopulaKind, Preset, ReorderArgs};
use kernelscore_cli::config::RunConfig;
use kernelscore_cli::dataset::{read_dataset, Format};
use kernelscore_cli::error::CliResult;

#[derive(Parser)]
#[command(name = "kernelscore", version, about = "Weighted kernel scores for ensemble forecasts")]
struct Cli {
    /// Input format of ensemble files.
    #[arg(long, value_enum, default_value = "csv", global = true)]
    format: Format,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; overrides KERNELSCORE_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Forecast ensembles (long CSV or JSONL).
    #[arg(long)]
    forecasts: PathBuf,
    /// Observations (CSV only).
    #[arg(long)]
    obs: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Score every case under each configured score.
    Score(Inputs),
    /// Diebold-Mariano comparison of two forecast sets.
    Compare {
        #[command(flatten)]
        inputs: Inputs,
        /// Competing forecast ensembles with the same case ids.
        #[arg(long)]
        forecasts_b: PathBuf,
    },
    /// Univariate or multivariate rank histogram.
    Rankhist(Inputs),
    /// Rejection-rate simulation study.
    Simulate {
        /// Standard configuration instead of the [simulate] config section.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Dimension for the orthant and half-space presets.
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Override the number of repetitions.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Fit censored shifted Gamma regression and emit quantile ensembles.
    FitCsgd {
        /// Training CSV with columns case_id, xbar, s, y.
        #[arg(long)]
        train: PathBuf,
        /// Prediction CSV with columns case_id, xbar, s.
        #[arg(long)]
        predict: Option<PathBuf>,
        /// Number of equidistant quantiles per predicted case.
        #[arg(long, default_value_t = 21)]
        members: usize,
    },
    /// Reorder sorted margins into multivariate ensembles.
    Reorder {
        #[arg(long)]
        forecasts: PathBuf,
        #[arg(long, value_enum)]
        copula: CopulaKind,
        /// Template ensembles for ECC (same format as forecasts).
        #[arg(long)]
        template: Option<PathBuf>,
        /// Row-major correlation matrix, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        correlation: Option<Vec<f64>>,
        /// Observation CSV from which to estimate the correlation.
        #[arg(long)]
        correlation_from: Option<PathBuf>,
        /// Return all grid combinations with weights.
        #[arg(long)]
        weight_mode: bool,
        /// Maximum number of grid combinations.
        #[arg(long)]
        cap: Option<u128>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let seed = config.resolve_seed(cli.seed)?;
    let common = Common { config, seed, out: cli.out };
    let format = cli.format;
    match cli.command {
        Command::Score(inp) => commands::score(&common, &read_dataset(&inp.forecasts, inp.obs.as_deref(), format)?),
        Command::Compare { inputs, forecasts_b } => {
            let a = read_dataset(&inputs.forecasts, inputs.obs.as_deref(), format)?;
            let b = read_dataset(&forecasts_b, None, format)?;
            commands::compare(&common, &a, &b)
        }
        Command::Rankhist(inp) => {
            commands::rankhist(&common, &read_dataset(&inp.forecasts, inp.obs.as_deref(), format)?)
        }
        Command::Simulate { preset, dim, reps } => commands::simulate(&common, preset, dim, reps),
        Command::FitCsgd { train, predict, members } => {
            commands::fit_csgd_cmd(&common, &train, predict.as_deref(), members)
        }
        Command::Reorder { forecasts, copula, template, correlation, correlation_from, weight_mode, cap } => {
            let data = read_dataset(&forecasts, None, format)?;
            let template = template.map(|t| read_dataset(&t, None, format)).transpose()?;
            let args = ReorderArgs {
                copula,
                template: template.as_ref(),
                correlation,
                correlation_from: correlation_from.as_deref(),
                weight_mode,
                cap,
            };
            commands::reorder_cmd(&common, &data, &args)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
