//! `moment-steer`: plan and simulate moment-based steering of an ensemble
//! with random parameters, and run the reference oracles.

mod config;
mod failure;
mod oracle;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "moment-steer", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan the control laws for a config, simulate the swarm, write results.
    Run {
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's number of agents.
        #[arg(long)]
        agents: Option<usize>,
        /// Overrides the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Print the normalized config (after overrides) and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Reference computations.
    #[command(subcommand)]
    Oracle(Oracle),
}

#[derive(Debug, Subcommand)]
enum Oracle {
    /// Moments of a distribution given as JSON (inline or `@file`).
    Moments {
        distribution: String,
        order: usize,
        /// Integrate numerically instead of using closed forms.
        #[arg(long)]
        quadrature: bool,
    },
    /// Next-state moments by recursion and by enumerating atomic inputs.
    Enumerate {
        /// JSON (inline or `@file`) with `x`, `a`, `u`, `c`, `dynamics`, `order`.
        spec: String,
    },
    /// Moments of an exported control density against prescribed moments.
    RealizeCheck { density: PathBuf, moments: PathBuf },
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("MOMENT_STEER_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| Failure::config(format!("MOMENT_STEER_THREADS={value} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::config(e.to_string()))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            seed,
            agents,
            output_dir,
            dump_config,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.problem.seed = seed;
            }
            if let Some(agents) = agents {
                cfg.problem.agents = agents;
            }
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            if dump_config {
                print!("{}", cfg.normalized());
                return Ok(());
            }
            configure_threads()?;
            run::run(&cfg)
        }
        Command::Oracle(o) => {
            configure_threads()?;
            match o {
                Oracle::Moments {
                    distribution,
                    order,
                    quadrature,
                } => println!("{}", oracle::moments(&distribution, order, quadrature)?),
                Oracle::Enumerate { spec } => println!("{}", oracle::enumerate(&spec)?),
                Oracle::RealizeCheck { density, moments } => {
                    let (report, pass) = oracle::realize_check(&density, &moments)?;
                    println!("{report}");
                    if !pass {
                        return Err(Failure::check("moment error above tolerance"));
                    }
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            ExitCode::from(failure.error.exit_code() as u8)
        }
    }
}
