//! `leafavg <task> --config <path> [--out <dir>] [--seed <u64>]`
//!
//! Exit codes: 0 pass, 2 failed certificate, 1 configuration or runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use leafavg_core::runner::{run, selftest, RunConfig, Task};

#[derive(Parser)]
#[command(name = "leafavg", version, about = "Leaf averages, basic polynomial rings and separation certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TaskArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Average a polynomial over the leaves and check the operator identities.
    Avg(TaskArgs),
    /// Discover generators of the basic ring up to degree D.
    Generators(TaskArgs),
    /// Check a generator file against the model.
    Verify(TaskArgs),
    /// Certify on samples that rho separates leaves.
    Separate(TaskArgs),
    /// Write samples of the quotient image rho(S^n) as CSV.
    Export(TaskArgs),
    /// Run the property suite over the bundled configs.
    Selftest {
        /// Directory of bundled configs.
        #[arg(long)]
        configs: Option<PathBuf>,
        /// Override the rank tolerance of floating rank decisions.
        #[arg(long)]
        tol_rank: Option<f64>,
    },
}

fn default_configs() -> PathBuf {
    let local = PathBuf::from("configs");
    if local.is_dir() {
        local
    } else {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
    }
}

fn run_task(task: Task, args: &TaskArgs) -> anyhow::Result<i32> {
    let mut config = RunConfig::load(&args.config)?;
    config.task = task;
    let outcome = run(&config, args.out.as_deref(), args.seed).with_context(|| format!("{} failed", task.name()))?;
    println!("{}", outcome.summary);
    for a in &outcome.artifacts {
        println!("  wrote {}", a.display());
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Avg(a) => run_task(Task::Avg, a),
        Command::Generators(a) => run_task(Task::Generators, a),
        Command::Verify(a) => run_task(Task::Verify, a),
        Command::Separate(a) => run_task(Task::Separate, a),
        Command::Export(a) => run_task(Task::Export, a),
        Command::Selftest { configs, tol_rank } => {
            let dir = configs.clone().unwrap_or_else(default_configs);
            selftest(&dir, *tol_rank).map_err(anyhow::Error::from).map(|report| {
                print!("{}", report.matrix());
                println!("selftest: {}", if report.passed { "pass" } else { "FAIL" });
                if report.passed {
                    0
                } else {
                    2
                }
            })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
