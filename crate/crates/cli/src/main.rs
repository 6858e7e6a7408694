use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod compare;
mod config;
mod error;
mod run;
mod table;

use config::Kind;
use error::CliError;

/// Random hierarchical Laplacians: spectra, eigenvalue-count simulations,
/// Chen–Stein bounds and densities of states.
#[derive(Parser)]
#[command(name = "hierlap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues and multiplicities of a hierarchical Laplacian.
    Spectrum(RunArgs),
    /// Monte Carlo law of the window counts against Poisson.
    Simulate(RunArgs),
    /// Explicit total-variation bounds per level.
    Bounds(RunArgs),
    /// Density of states of the perturbation field.
    Dos(RunArgs),
    /// Monte Carlo check of the conditioning identity.
    Verify(RunArgs),
    /// Per-level table of simulated TV against the theoretical bound.
    Compare {
        simulate: PathBuf,
        bounds: PathBuf,
        /// Also write compare.csv and compare.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides `output` in the config, default `.`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(kind: Kind, args: &RunArgs) -> Result<(), CliError> {
    let cfg = config::load(&args.config)?;
    let validated = cfg.validate(kind, args.seed)?;
    let workers = match args.workers {
        Some(0) => return Err(CliError::config("workers", "must be at least 1")),
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let table = pool.install(|| run::run(kind, &cfg, &validated))?;
    let dir = args
        .out
        .clone()
        .or(cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    table.write(&dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Spectrum(a) => execute(Kind::Spectrum, a),
        Command::Simulate(a) => execute(Kind::Simulate, a),
        Command::Bounds(a) => execute(Kind::Bounds, a),
        Command::Dos(a) => execute(Kind::Dos, a),
        Command::Verify(a) => execute(Kind::Verify, a),
        Command::Compare {
            simulate,
            bounds,
            out,
        } => compare::compare(simulate, bounds).and_then(|t| {
            std::io::stdout().write_all(&t.to_csv()?)?;
            match out {
                Some(dir) => t.write(dir),
                None => Ok(()),
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hierlap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
