use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meshpon::{execute, CliError, Command, ExperimentConfig, Overrides};

/// Mesh-capable TWDM-PON fronthaul experiments.
#[derive(Parser, Debug)]
#[command(name = "meshpon", version)]
struct Cli {
    /// JSON experiment config; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Latency oracle for `optimize` (analytical or simulated).
    #[arg(long, global = true)]
    oracle: Option<String>,
    /// Iteration budget per MEC count; replaces any configured sweep.
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Reflective-path loss table with budget classes.
    Budget,
    /// Simulate one vPON slice.
    Simulate {
        /// Also write the per-frame trace.
        #[arg(long)]
        trace: bool,
    },
    /// Feasible (n71, n72) slice region per load.
    Region {
        /// Re-check boundary points with the simulator.
        #[arg(long)]
        cross_check: bool,
    },
    /// Minimum-MEC slice assignment.
    Optimize,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out_dir: cli.out,
        oracle: cli.oracle,
        max_iterations: cli.max_iterations,
    });
    let cmd = match cli.command {
        Sub::Budget => Command::Budget,
        Sub::Simulate { trace } => {
            cfg.sim.record_trace |= trace;
            Command::Simulate
        }
        Sub::Region { cross_check } => {
            cfg.region.cross_check |= cross_check;
            Command::Region
        }
        Sub::Optimize => Command::Optimize,
    };
    let outcome = execute(cmd, &cfg)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for a in &outcome.artifacts {
        println!("wrote {}", cfg.out_dir.join(&a.name).display());
    }
    if outcome.infeasible.is_empty() {
        Ok(0)
    } else {
        for m in &outcome.infeasible {
            eprintln!("infeasible: {m}");
        }
        Ok(3)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("meshpon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
