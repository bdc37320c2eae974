mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use nos_core::allocation::AllocError;
use nos_core::kernel::KernelError;
use nos_core::sim::SimError;
use nos_core::study::{Normalisation, StudyError};
use nos_core::{StabilityError, TopologyName};

use crate::config::{Config, ConfigError};

#[derive(Parser)]
#[command(name = "nos", version, about = "Delay-aware spiking scheduler lab")]
struct Cli {
    /// TOML configuration with optional [study], [kernel], [alloc] and [sim] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSVs and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Normalisation of x̄ in the study tails.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Normalisation>,
    /// Use the exact delay threshold instead of the envelope.
    #[arg(long, global = true)]
    exact: bool,
    /// Run the simulator with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Margin-proxy sweep over topologies, delays and schedulers.
    Study,
    /// Delay thresholds, margins and step bounds.
    Stability {
        #[arg(long = "topology")]
        topologies: Vec<TopologyName>,
        #[arg(long = "delay")]
        delays: Vec<f64>,
        /// Loop gain; defaults to the calibrated study gain.
        #[arg(long)]
        g: Option<f64>,
    },
    /// Slot-level simulation for every configured scheduler, delay and seed.
    Simulate,
    /// Calibrate the NOS gain and print it.
    Calibrate,
}

fn parse_mode(s: &str) -> Result<Normalisation, String> {
    s.parse().map_err(|e: StudyError| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.parallel {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(mode) = cli.mode {
        cfg.study.mode = mode;
    }
    if let Some(seed) = cli.seed {
        cfg.sim.seeds = vec![seed];
    }
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(ConfigError("no subcommand given (study, stability, simulate or calibrate)".into()).into());
    };
    match command {
        Command::Study => commands::study(&cfg, &cli.out),
        Command::Stability { topologies, delays, g } => {
            let args = commands::StabilityArgs { exact: cli.exact, topologies, delays, g };
            commands::stability(&cfg, &args, &cli.out)
        }
        Command::Simulate => commands::simulate(&cfg, &cli.out),
        Command::Calibrate => commands::calibrate(&cfg),
    }
}

/// 2 for configuration problems, 3 for an open loop that is already
/// unstable, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(s) = cause.downcast_ref::<StabilityError>() {
            return stability_code(s);
        }
        if let Some(s) = cause.downcast_ref::<StudyError>() {
            return match s {
                StudyError::Stability(s) => stability_code(s),
                _ => 2,
            };
        }
        if let Some(s) = cause.downcast_ref::<SimError>() {
            return match s {
                SimError::Stability(s) => stability_code(s),
                SimError::Kernel(KernelError::Divergence { .. }) => 1,
                _ => 2,
            };
        }
        if cause.is::<ConfigError>() || cause.is::<AllocError>() || cause.is::<KernelError>() {
            return 2;
        }
    }
    1
}

fn stability_code(e: &StabilityError) -> u8 {
    match e {
        StabilityError::OpenLoopUnstable { .. } => 3,
        _ => 2,
    }
}
