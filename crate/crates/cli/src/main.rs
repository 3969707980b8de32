mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Ctx;
use config::{canonical_hash, Config, Loaded};
use error::{CliError, CliResult};
use output::{Provenance, Sink, VERSION};

#[derive(Parser)]
#[command(name = "jumpld", version = VERSION, about = "Small-noise large deviations for Levy-driven Galerkin systems")]
struct Cli {
    /// Master seed for all random substreams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo sample count, overriding the config.
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Directory for JSON and CSV outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate h, h', l and l' on a radial grid.
    NoiseTable(WithConfig),
    /// Simulate trajectories of the scaled system.
    Simulate(WithConfig),
    /// Monte Carlo estimate of the Laplace functional.
    Laplace(WithConfig),
    /// Maximize the control problem for the limit value.
    Value(WithConfig),
    /// Rate function at a target state.
    Rate(WithConfig),
    /// Run a verification suite.
    Verify {
        /// One of: legendre, structural, hjb, laplace-limit, yosida, ldp, continuity, exp-moment.
        suite: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Reproduce a built-in experiment.
    Repro {
        /// Experiment id, e.g. linear-oracle.
        id: String,
    },
    /// Check a configuration without running anything.
    Validate(WithConfig),
}

#[derive(clap::Args)]
struct WithConfig {
    #[arg(long)]
    config: PathBuf,
}

fn load(path: Option<&PathBuf>) -> CliResult<Loaded> {
    match path {
        Some(p) => config::load(p),
        None => Ok(Loaded {
            hash: canonical_hash(&serde_json::json!({})),
            config: Config::default(),
        }),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Schema(format!("`--threads`: {e}")))?;
    }
    let config_path = match &cli.command {
        Command::NoiseTable(c)
        | Command::Simulate(c)
        | Command::Laplace(c)
        | Command::Value(c)
        | Command::Rate(c)
        | Command::Validate(c) => Some(&c.config),
        Command::Verify { config, .. } => config.as_ref(),
        Command::Repro { .. } => None,
    };
    let loaded = load(config_path)?;
    let provenance = Provenance {
        version: VERSION,
        config_hash: loaded.hash.clone(),
        seed: cli.seed,
        threads: rayon::current_num_threads(),
    };
    let mut sink = Sink::new(&cli.out_dir, provenance)?;
    let ctx = Ctx {
        config: &loaded.config,
        seed: cli.seed,
        samples: cli.samples,
    };
    let result = match &cli.command {
        Command::NoiseTable(_) => commands::noise_table(&ctx, &mut sink),
        Command::Simulate(_) => commands::simulate(&ctx, &mut sink),
        Command::Laplace(_) => commands::laplace(&ctx, &mut sink),
        Command::Value(_) => commands::value(&ctx, &mut sink),
        Command::Rate(_) => commands::rate(&ctx, &mut sink),
        Command::Verify { suite, .. } => commands::verify(&ctx, suite, &mut sink),
        Command::Repro { id } => commands::repro(id, cli.seed, cli.samples, &mut sink),
        Command::Validate(_) => commands::validate(&ctx, &mut sink),
    };
    for path in &sink.written {
        println!("wrote {}", path.display());
    }
    result
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jumpld: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
