//! Batch experiment driver for the `ftdyn` pipeline.
//!
//! Every command reads its inputs from and writes its outputs to one run
//! directory (`--out`), so a run can be resumed stage by stage:
//!
//! ```text
//! gen-data -> train-dynamics -> finetune -> eval-dynamics
//!                                        -> run-mpc
//!                                        -> train-rl -> eval-policy
//! report DIR...
//! ```

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod report;

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 1.
    #[error("{0}")]
    Config(String),
    /// Failure while running; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ftdyn::Error> for CliError {
    fn from(e: ftdyn::Error) -> Self {
        match e {
            ftdyn::Error::Config(_) | ftdyn::Error::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ftdyn",
    version,
    about = "Force-torque dynamics experiments for peg-in-hole insertion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the configuration's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set mpc.n_samples=100`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Probe grids and synthesize trajectory datasets.
    GenData,
    /// Pretrain the dynamics model on the training holes.
    TrainDynamics,
    /// Finetune on every test hole and data fraction, plus scratch baselines.
    Finetune,
    /// Held-out error of every trained model.
    EvalDynamics,
    /// CEM benchmark trials on the test holes.
    RunMpc,
    /// Train policies offline against the finetuned models.
    TrainRl,
    /// Benchmark trials of the trained policies.
    EvalPolicy,
    /// Mean and std of result tables across run directories.
    Report {
        #[arg(value_name = "RUN_DIR")]
        dirs: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::TrainDynamics => "train-dynamics",
            Command::Finetune => "finetune",
            Command::EvalDynamics => "eval-dynamics",
            Command::RunMpc => "run-mpc",
            Command::TrainRl => "train-rl",
            Command::EvalPolicy => "eval-policy",
            Command::Report { .. } => "report",
        }
    }
}

/// Parses arguments and runs one command. Returns the process exit code;
/// errors are printed to stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Report { dirs } = &cli.command {
        let table = report::aggregate(dirs)?;
        let text = report::to_csv(&table);
        print!("{text}");
        if let Some(out) = &cli.out {
            std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
            let path = out.join("report.csv");
            std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        }
        return Ok(());
    }
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::resolve(&text, &cli.overrides)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Config("--out DIR is required".into()))?;
    let mut run = output::RunDir::open(&out, cli.command.name(), &cfg)?;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg, &mut run)?,
        Command::TrainDynamics => commands::train_dynamics(&cfg, &mut run)?,
        Command::Finetune => commands::finetune(&cfg, &mut run)?,
        Command::EvalDynamics => commands::eval_dynamics(&cfg, &mut run)?,
        Command::RunMpc => commands::run_mpc(&cfg, &mut run)?,
        Command::TrainRl => commands::train_rl(&cfg, &mut run)?,
        Command::EvalPolicy => commands::eval_policy(&cfg, &mut run)?,
        Command::Report { .. } => unreachable!("handled above"),
    }
    run.finish()
}
