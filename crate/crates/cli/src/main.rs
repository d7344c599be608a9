//! `rwn-dirac`: sweeps over the interior radial Dirac operator.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure
//! (outputs are still written, failed rows carry `status = failed`).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;
use output::{envelope, write_outputs, Format};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rwn-dirac", version, about = "Radial Dirac operator sweeps for RWN black-hole interiors")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Sector, horizons and surface gravity.
    Classify,
    /// Tortoise coordinate samples.
    Coords,
    /// Operator coefficients a, b, c, d.
    Coeffs,
    /// Endpoint classification and deficiency indices.
    Endpoints,
    /// Critical anomalous amplitude.
    Threshold,
    /// Doubling-window eigenvalue scan.
    Eigenscan,
    /// Weyl-sequence residuals.
    Weyldemo,
    /// Weyl-Titchmarsh m-function on a horizontal line.
    Mfunc,
    /// Variation-of-constants evidence at the candidate eigenvalue.
    Candidate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Coords => "coords",
            Command::Coeffs => "coeffs",
            Command::Endpoints => "endpoints",
            Command::Threshold => "threshold",
            Command::Eigenscan => "eigenscan",
            Command::Weyldemo => "weyldemo",
            Command::Mfunc => "mfunc",
            Command::Candidate => "candidate",
        }
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let config = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::defaults(),
    };
    let settings = config.tolerances.settings();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;

    let table = match cli.command {
        Command::Classify => commands::classify(&config),
        Command::Coords => commands::coords(&config, &pool),
        Command::Coeffs => commands::coeffs(&config, &pool),
        Command::Endpoints => commands::endpoints(&config, &settings),
        Command::Threshold => commands::threshold(&config),
        Command::Eigenscan => commands::eigenscan(&config, &settings, &pool),
        Command::Weyldemo => commands::weyldemo(&config, &settings, &pool),
        Command::Mfunc => commands::mfunc(&config, &settings, &pool),
        Command::Candidate => commands::candidate(&config, &settings),
    }?;

    let name = cli.command.name();
    let env = envelope(name, &config, &table, pool.current_num_threads());
    for path in write_outputs(&cli.out, name, cli.format, &table, &env)? {
        println!("{}", path.display());
    }
    let failures = table.failures();
    for (row, msg) in &failures {
        eprintln!("row {row}: {msg}");
    }
    Ok(failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
