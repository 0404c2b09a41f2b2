use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rwre_core::config::{ExperimentConfig, Verb};
use rwre_core::report::render_report;
use rwre_core::runner::{run_experiment, RunError};
use rwre_core::Error;

/// Random walk in random environment experiments.
#[derive(Parser)]
#[command(name = "rwre", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record walk trajectories and their regeneration times.
    Simulate(RunArgs),
    /// Run a Monte Carlo estimator.
    Estimate(RunArgs),
    /// Evaluate an exact oracle.
    Oracle(RunArgs),
    /// Check and print a finished run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (verb, args) = match cli.command {
        Command::Simulate(a) => (Verb::Simulate, a),
        Command::Estimate(a) => (Verb::Estimate, a),
        Command::Oracle(a) => (Verb::Oracle, a),
        Command::Report { out } => {
            return match render_report(&out) {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&RunError::Runtime(e)),
            };
        }
    };
    match run(verb, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("rwre: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn run(verb: Verb, args: RunArgs) -> Result<(), RunError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| RunError::Invalid(Error::Config(format!("{}: {e}", args.config.display()))))?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(RunError::Invalid)?;
    if cfg.experiment.verb() != verb {
        return Err(RunError::Invalid(Error::Config(format!(
            "experiment.kind: {} runs under `{}`, not `{verb}`",
            cfg.experiment.name(),
            cfg.experiment.verb()
        ))));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    if let Some(o) = args.out {
        cfg.out = Some(o);
    }
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| RunError::Invalid(Error::Config("out: no output directory (use --out)".into())))?;
    let report = run_experiment(&cfg, &out)?;
    println!("{}", report.summary_path.display());
    for p in &report.csv_paths {
        println!("{}", p.display());
    }
    println!("config digest {} ({:.3} s)", report.config_digest, report.wall_clock_seconds);
    Ok(())
}
