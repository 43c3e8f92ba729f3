use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nm_cli::config::{Experiment, WeightName};
use nm_cli::experiments::{EXIT_CONFIG, EXIT_OK};
use nm_cli::{load_config, run_experiment, validate_text, ConfigError, Overrides};

#[derive(Parser)]
#[command(name = "solver", version, about = "Spectral Nash-Moser experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for report.json, history.csv and measure.csv.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides SOLVER_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    weight_mode: Option<WeightName>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run { config: PathBuf },
    /// Check the config and print the resolved parameters.
    Validate { config: PathBuf },
    /// Run a measure_scan config.
    Scan { config: PathBuf },
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for non-convergence.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                eprintln!("configuration error: {c}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let threads = match (cli.threads, std::env::var("SOLVER_THREADS")) {
        (Some(n), _) => Some(n),
        (None, Ok(v)) => Some(v.trim().parse().with_context(|| format!("SOLVER_THREADS={v:?} is not a thread count"))?),
        (None, Err(_)) => None,
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let overrides = Overrides {
        output_dir: cli.output_dir,
        seed: cli.seed,
        weight_mode: cli.weight_mode,
    };
    let (path, scan_only) = match &cli.command {
        Command::Run { config } => (config, false),
        Command::Scan { config } => (config, true),
        Command::Validate { config } => {
            let mut cfg = load_config(config)?;
            overrides.apply(&mut cfg);
            print!("{}", validate_text(&cfg)?);
            return Ok(EXIT_OK);
        }
    };
    let mut cfg = load_config(path)?;
    overrides.apply(&mut cfg);
    if scan_only && cfg.experiment != Experiment::MeasureScan {
        bail!("`scan` expects experiment = \"measure_scan\", found \"{}\"", cfg.experiment.as_str());
    }
    let outcome = run_experiment(&cfg)?;
    println!("{}", outcome.summary);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.exit_code)
}
