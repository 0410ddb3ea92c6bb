use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use observalab::cli::{run, CommandName, RunConfig, RunOptions};
use observalab::Error;

#[derive(Debug, Parser)]
#[command(name = "observalab", version, about = "Spectral certification of wave observability on model domains")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Treat configurations with T <= 2R as failures.
    #[arg(long, global = true)]
    strict: bool,

    /// Seed for all random draws; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mode table
    Spectrum,
    /// Multiplier identities and trace inequalities
    VerifyIdentities,
    /// Gram spectra of the exponential trace system
    Riesz,
    /// Monte-Carlo observability ratios
    Observe,
    /// Memory-kernel perturbation certificate
    Visco,
    /// Boundary control synthesis
    Control {
        /// Problem file (JSON).
        #[arg(long)]
        problem: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("observalab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<i32, Error> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let config = RunConfig::load(&path)?;
    let (command, problem) = match cli.command {
        Command::Spectrum => (CommandName::Spectrum, None),
        Command::VerifyIdentities => (CommandName::VerifyIdentities, None),
        Command::Riesz => (CommandName::Riesz, None),
        Command::Observe => (CommandName::Observe, None),
        Command::Visco => (CommandName::Visco, None),
        Command::Control { problem } => (CommandName::Control, Some(problem)),
    };
    let options = RunOptions {
        strict: cli.strict,
        seed: cli.seed,
        out: cli.out,
        problem,
    };
    let outcome = run(command, config, &options)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    println!(
        "{}: {}{}",
        command.as_str(),
        if outcome.pass { "pass" } else { "FAIL" },
        if outcome.outside_hypothesis { " (some horizons outside T > 2R)" } else { "" }
    );
    Ok(outcome.exit_code())
}
