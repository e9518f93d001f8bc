//! Command-line front end. Every subcommand except `replay` runs one
//! experiment config into a run directory; the exit status is 0 iff every
//! verdict passed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phi4::experiment::{self, Experiment, RunOptions};

#[derive(Parser)]
#[command(name = "phi4", version, about = "Dynamic phi^4_2 simulator and estimate checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory.
    #[arg(long, env = "PHI4_OUT", default_value = "runs/latest")]
    out: PathBuf,
    /// Overrides `base_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "PHI4_WORKERS", default_value_t = default_workers())]
    workers: usize,
    /// Replace a non-empty run directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Barrier calibration and restart-count tails.
    Calibrate(RunArgs),
    /// Decay rates and short-time smoothing of the linearised flow.
    Contraction(RunArgs),
    /// Poincare ratios along long runs.
    SpectralGap(RunArgs),
    /// Invariant suite with a single pass/fail bundle.
    Verify(RunArgs),
    /// Both sides of the variance identity.
    BeCheck(RunArgs),
    /// Coming down from infinity for growing initial data.
    ComingDown(RunArgs),
    /// Re-executes a run from its manifest and compares output hashes.
    Replay {
        /// Run directory or its manifest.json.
        manifest: PathBuf,
        #[arg(long, env = "PHI4_WORKERS", default_value_t = default_workers())]
        workers: usize,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run(expected: Experiment, args: RunArgs) -> phi4::Result<bool> {
    let cfg = experiment::load_config(&args.config, args.seed)?;
    if cfg.experiment != expected {
        return Err(phi4::Error::Config(format!(
            "{} is a {} config, not {}",
            args.config.display(),
            cfg.experiment.name(),
            expected.name()
        )));
    }
    let outcome = experiment::run(&cfg, &RunOptions { out: args.out, workers: args.workers, force: args.force })?;
    for v in &outcome.report.verdicts {
        println!("{} {} (margin {:.4e})", if v.pass { "PASS" } else { "FAIL" }, v.bound, v.margin);
    }
    println!("wrote {}", outcome.dir.display());
    Ok(outcome.manifest.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate(a) => run(Experiment::Calibrate, a),
        Command::Contraction(a) => run(Experiment::Contraction, a),
        Command::SpectralGap(a) => run(Experiment::SpectralGap, a),
        Command::Verify(a) => run(Experiment::Verify, a),
        Command::BeCheck(a) => run(Experiment::BeCheck, a),
        Command::ComingDown(a) => run(Experiment::ComingDown, a),
        Command::Replay { manifest, workers } => experiment::replay(&manifest, workers).map(|r| {
            match &r.first_divergent {
                None => println!("PASS replay of {} ({} files identical)", r.dir.display(), r.files_checked),
                Some(f) => println!("FAIL replay of {}: first divergent file {f}", r.dir.display()),
            }
            r.pass
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
