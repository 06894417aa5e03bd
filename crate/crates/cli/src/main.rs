//! `bangopt`: reproducible control-protocol experiment campaigns.
//!
//! Every command reads an optional JSON config (`--config run.json`), merges
//! command-line flags over it (flags win), resolves a seed, executes, and
//! writes a CSV plus a `.meta.json` sidecar with the fully expanded
//! configuration. Exit codes: 0 success, 1 numerical failure, 2 bad
//! configuration.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "bangopt",
    version,
    about = "Fast ground-state preparation via optimized control protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one protocol at a fixed duration.
    Optimize(Overrides),
    /// Optimized fidelity over a duration grid.
    ScanTau(Overrides),
    /// Adaptive minimal-time scans over system sizes (LMG).
    ScanSize(Overrides),
    /// Duration scans for several energy bounds (LMG).
    ScanGmax(Overrides),
    /// Fidelity map of saturated double-bang protocols (LMG).
    SaturatedScan(Overrides),
    /// Fidelity map of constant protocols (LMG).
    ConstantScan(Overrides),
    /// Minimum spectral gap of the model.
    Gap(Overrides),
    /// Power-law fit of tau* Delta_min vs N from a scan-size CSV.
    FitScaling(Overrides),
    /// State samples along one protocol's evolution.
    Trajectory(Overrides),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Optimize(_) => "optimize",
            Command::ScanTau(_) => "scan-tau",
            Command::ScanSize(_) => "scan-size",
            Command::ScanGmax(_) => "scan-gmax",
            Command::SaturatedScan(_) => "saturated-scan",
            Command::ConstantScan(_) => "constant-scan",
            Command::Gap(_) => "gap",
            Command::FitScaling(_) => "fit-scaling",
            Command::Trajectory(_) => "trajectory",
        }
    }

    fn overrides(&self) -> &Overrides {
        match self {
            Command::Optimize(o)
            | Command::ScanTau(o)
            | Command::ScanSize(o)
            | Command::ScanGmax(o)
            | Command::SaturatedScan(o)
            | Command::ConstantScan(o)
            | Command::Gap(o)
            | Command::FitScaling(o)
            | Command::Trajectory(o) => o,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let overrides = cli.command.overrides();
    let config = match RunConfig::resolve(overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("bangopt: {}", e.message());
            std::process::exit(e.exit_code());
        }
    };
    if let Err(e) = config.validate_common() {
        eprintln!("bangopt: {}", e.message());
        std::process::exit(e.exit_code());
    }

    // worker pool: config key, overridden by BANGOPT_WORKERS (already merged)
    if let Some(workers) = config.workers {
        if workers == 0 {
            eprintln!("bangopt: workers: must be at least 1");
            std::process::exit(2);
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }

    let result = match &cli.command {
        Command::Optimize(_) => commands::cmd_optimize(&config),
        Command::ScanTau(_) => commands::cmd_scan_tau(&config),
        Command::ScanSize(_) => commands::cmd_scan_size(&config),
        Command::ScanGmax(_) => commands::cmd_scan_gmax(&config),
        Command::SaturatedScan(_) => commands::cmd_saturated_scan(&config),
        Command::ConstantScan(_) => commands::cmd_constant_scan(&config),
        Command::Gap(_) => commands::cmd_gap(&config),
        Command::FitScaling(_) => commands::cmd_fit_scaling(&config),
        Command::Trajectory(_) => commands::cmd_trajectory(&config),
    };
    if let Err(e) = result {
        eprintln!("bangopt {}: {}", cli.command.name(), e.message());
        std::process::exit(e.exit_code());
    }
}
