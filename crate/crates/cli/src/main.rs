//! `swherd`: train, evaluate, simulate and sweep leader herding policies.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error,
//! 4 incompatible or malformed Q-table, 1 anything else.

mod commands;
mod config;
mod error;
mod output;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{CliConfig, Loader};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "swherd",
    version,
    about = "Leader-based swarm herding with tabular RL"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for training cells and evaluation runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Follower backend: dtmc or mean-field.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Override any configuration key, e.g. `--set env.beta=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a Q-table and write it with its metadata and training log.
    Train,
    /// Evaluate a trained Q-table over independent runs.
    Evaluate {
        #[arg(long)]
        table: PathBuf,
        /// Population size used for testing, if different from training.
        #[arg(long)]
        n_test: Option<u64>,
        #[arg(long)]
        epsilon_eval: Option<f64>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Run one episode and write its trace.
    Simulate {
        /// `random` or a Q-table path.
        #[arg(long, default_value = "random")]
        policy: String,
        #[arg(long)]
        epsilon_eval: Option<f64>,
        /// Also write a plain-text frame per iteration.
        #[arg(long)]
        frames: bool,
    },
    /// Train and evaluate every cell of the configured grid.
    Sweep {
        /// Keep rows already present in the output and skip their cells.
        #[arg(long)]
        resume: bool,
    },
    /// Print a Q-table header and value statistics.
    Inspect {
        #[arg(long)]
        table: PathBuf,
    },
}

fn load_config(common: &Common, command: &Command) -> Result<CliConfig, CliError> {
    let mut loader = Loader::new(common.config.as_deref())?;
    loader.apply_env(std::env::vars())?;
    for pair in &common.overrides {
        loader.set_pair(pair)?;
    }
    if let Some(seed) = common.seed {
        loader.set("seed", &seed.to_string())?;
    }
    if let Some(dir) = &common.out_dir {
        loader.set("out_dir", &quote(&dir.to_string_lossy()))?;
    }
    if let Some(b) = &common.backend {
        loader.set("env.backend", &quote(b))?;
    }
    let eps = match command {
        Command::Evaluate { epsilon_eval, .. } | Command::Simulate { epsilon_eval, .. } => {
            *epsilon_eval
        }
        _ => None,
    };
    if let Some(e) = eps {
        loader.set("eval.epsilon", &e.to_string())?;
    }
    if let Command::Evaluate { runs: Some(r), .. } = command {
        loader.set("eval.runs", &r.to_string())?;
    }
    loader.finish()
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.common, &cli.command)?;
    let pool = match cli.common.jobs {
        Some(0) => return Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Evaluate { table, n_test, .. } => commands::evaluate(&cfg, &table, n_test),
        Command::Simulate { policy, frames, .. } => commands::simulate(&cfg, &policy, frames),
        Command::Sweep { resume } => commands::sweep(&cfg, resume),
        Command::Inspect { table } => commands::inspect(&table),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("swherd: {e}");
            e.exit_code()
        }
    }
}
