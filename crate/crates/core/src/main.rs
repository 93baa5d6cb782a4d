//! `flowcast` command-line front end.
//!
//! Every subcommand loads a JSON run configuration, applies the
//! `--seed` / `--out` overrides, validates it, and executes one
//! pipeline stage. Success prints a one-line summary to stdout and exits
//! 0; convergence warnings annotate the run on stderr without failing
//! it. Errors print a machine-readable JSON object to stderr and exit 1.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowcast::config::RunConfig;
use flowcast::pipeline::{self, CmdReport, PipelineError};

#[derive(Parser)]
#[command(
    name = "flowcast",
    version,
    about = "Two-stage Bayesian forecasting of daily driver flows and passenger waits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from the config's simulate section.
    Simulate(Common),
    /// Fit the daily-flow model on the training window.
    FitFlow(Common),
    /// Fit the sub-daily wait regression on the training window.
    FitWait(Common),
    /// Predict daily flows over the forecast window for each model.
    PredictFlow(Common),
    /// Predict sub-daily waits over the forecast window.
    PredictWait(Common),
    /// Score predictions against observed data.
    Evaluate(Common),
    /// Materialize the configured train/test split.
    Scenario(Common),
}

impl Command {
    fn dispatch(&self) -> Result<CmdReport, PipelineError> {
        let (run, common): (fn(&RunConfig) -> _, &Common) = match self {
            Command::Simulate(c) => (pipeline::cmd_simulate, c),
            Command::FitFlow(c) => (pipeline::cmd_fit_flow, c),
            Command::FitWait(c) => (pipeline::cmd_fit_wait, c),
            Command::PredictFlow(c) => (pipeline::cmd_predict_flow, c),
            Command::PredictWait(c) => (pipeline::cmd_predict_wait, c),
            Command::Evaluate(c) => (pipeline::cmd_evaluate, c),
            Command::Scenario(c) => (pipeline::cmd_scenario, c),
        };
        let mut cfg = RunConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &common.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        run(&cfg)
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command.dispatch() {
        Ok(report) => {
            println!("{}", report.summary);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let doc = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{doc}");
            ExitCode::FAILURE
        }
    }
}
