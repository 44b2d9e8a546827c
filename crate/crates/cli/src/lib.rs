//! Batch pipeline behind the `bpinn` binary: reference solving, training,
//! prediction, evaluation, ageing propagation and the sensitivity sweep.

pub mod check;
pub mod commands;
pub mod config;
pub mod error;
pub mod svg;
pub mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "bpinn", version, about = "Bayesian physics-informed models of transformer oil temperature")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.lr=0.001`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_kv)]
    pub set: Vec<(String, String)>,
    /// Base seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic operating series.
    SynthData {
        #[arg(long)]
        days: Option<u32>,
    },
    /// Solve the reference field on the operating series.
    SolveRef {
        /// Operating series CSV; synthetic data when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train one variant.
    Train {
        /// bpinn-hetero, bpinn-homo, dpinn-hetero, dpinn-homo or pinn.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Predictive mean and variances on a regular grid.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a checkpoint against a reference grid.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Comma-separated prediction instants in hours.
        #[arg(long, value_delimiter = ',')]
        instants: Option<Vec<f64>>,
    },
    /// Propagate predictive uncertainty to ageing and loss of life.
    Age {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train and score every cell of the set-size grid.
    Sweep {
        /// Divide every set size by this factor.
        #[arg(long)]
        scale: Option<usize>,
        /// Cells trained concurrently.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Gradient, derivative and solver self-tests.
    Check,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SynthData { .. } => "synth-data",
            Command::SolveRef { .. } => "solve-ref",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Age { .. } => "age",
            Command::Sweep { .. } => "sweep",
            Command::Check => "check",
        }
    }

    /// Flags that are shorthands for configuration keys.
    fn overrides(&self) -> Vec<(String, toml::Value)> {
        let mut o = Vec::new();
        let mut put = |k: &str, v: toml::Value| o.push((k.to_string(), v));
        let path = |p: &PathBuf| toml::Value::String(p.display().to_string());
        let int = |n: usize| toml::Value::Integer(n as i64);
        match self {
            Command::SynthData { days } => {
                if let Some(d) = days {
                    put("data.days", toml::Value::Integer(*d as i64));
                }
            }
            Command::SolveRef { input } | Command::Age { input, .. } => {
                if let Some(p) = input {
                    put("data.input", path(p));
                }
            }
            Command::Train { variant, epochs, input } => {
                if let Some(v) = variant {
                    put("train.variant", toml::Value::String(v.trim().to_ascii_lowercase().replace('-', "_")));
                }
                if let Some(e) = epochs {
                    put("train.epochs", int(*e));
                }
                if let Some(p) = input {
                    put("data.input", path(p));
                }
            }
            Command::Evaluate { instants, .. } => {
                if let Some(list) = instants {
                    put("metrics.instants", toml::Value::Array(list.iter().map(|h| toml::Value::Float(*h)).collect()));
                }
            }
            Command::Sweep { scale, jobs, reps, epochs } => {
                for (k, v) in [("sweep.scale", scale), ("sweep.jobs", jobs), ("sweep.reps", reps), ("train.epochs", epochs)] {
                    if let Some(v) = v {
                        put(k, int(*v));
                    }
                }
            }
            Command::Predict { .. } | Command::Check => {}
        }
        o
    }
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected KEY=VALUE, got `{s}`")),
    }
}

/// Resolves the configuration: file, then `--set` pairs, then command
/// flags, then `--seed` and `--output`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut overrides: Vec<(String, toml::Value)> =
        cli.global.set.iter().map(|(k, v)| (k.clone(), config::parse_value(v))).collect();
    overrides.extend(cli.command.overrides());
    if let Some(seed) = cli.global.seed {
        let seed = i64::try_from(seed).map_err(|_| CliError::Usage(format!("seed {seed} exceeds {}", i64::MAX)))?;
        overrides.push(("seed".into(), toml::Value::Integer(seed)));
    }
    if let Some(out) = &cli.global.output {
        overrides.push(("output".into(), toml::Value::String(out.display().to_string())));
    }
    RunConfig::resolve(cli.global.config.as_deref(), &overrides)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    if matches!(cli.command, Command::Check) {
        return check::run(&cfg);
    }
    commands::prepare_output(&cfg, cli.command.name())?;
    match &cli.command {
        Command::SynthData { .. } => commands::synth_data(&cfg),
        Command::SolveRef { .. } => commands::solve_ref(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Predict { checkpoint } => commands::predict(&cfg, checkpoint.as_deref()),
        Command::Evaluate { checkpoint, truth, .. } => commands::evaluate(&cfg, checkpoint.as_deref(), truth.as_deref()),
        Command::Age { checkpoint, .. } => commands::age(&cfg, checkpoint.as_deref()),
        Command::Sweep { .. } => sweep::run(&cfg),
        Command::Check => unreachable!("handled above"),
    }
}
