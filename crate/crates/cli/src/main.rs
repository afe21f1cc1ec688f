//! `eprcam`: simulate, process and analyze time-stamping camera acquisitions.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{keys_help, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "eprcam",
    version,
    about = "Spatial entanglement from a simulated or recorded photon-pair camera"
)]
pub struct Cli {
    /// Configuration file of `key = value` lines
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Root seed (overrides `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Basis to simulate or process: nf or ff (overrides `basis`)
    #[arg(long, global = true)]
    basis: Option<String>,
    /// Coincidence window in ns (overrides `pairing.window_ps`)
    #[arg(long, global = true, value_name = "NS")]
    window_ns: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one acquisition: hits.phl1, truth.csv
    Simulate {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Cluster, pair and histogram a hit file: pairs.csv, jpd.csv
    Process {
        /// PHL1 hit file
        hits: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Certify entanglement from a near-field and a far-field histogram
    Analyze {
        /// Near-field jpd.csv (its sidecar is jpd.csv.meta)
        #[arg(long, value_name = "JPD")]
        nf: Option<PathBuf>,
        /// Far-field jpd.csv
        #[arg(long, value_name = "JPD")]
        ff: Option<PathBuf>,
        /// Ignore the inputs and build the report from the published widths
        #[arg(long)]
        inject_table1: bool,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Print a report file as a table
    Report {
        /// report.kv written by `analyze`
        report: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Analysis(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Analysis(_) => 3,
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    for name in cfg.apply_env(std::env::vars()) {
        eprintln!("warning: ignoring unknown environment variable {name}");
    }
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("--seed", "seed", &seed.to_string())?;
    }
    if let Some(b) = &cli.basis {
        cfg.set("--basis", "basis", b)?;
    }
    if let Some(ns) = cli.window_ns {
        if !(ns > 0.0 && ns.is_finite()) {
            return Err(CliError::Usage("--window-ns must be positive".into()));
        }
        cfg.set(
            "--window-ns",
            "pairing.window_ps",
            &((ns * 1000.0).round() as u64).to_string(),
        )?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Report { report } = &cli.command {
        return commands::report(report);
    }
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Simulate { out } => commands::simulate(&cfg, &out),
        Command::Process { hits, out } => commands::process(&cfg, &hits, &out),
        Command::Analyze {
            nf,
            ff,
            inject_table1,
            out,
        } => commands::analyze(&cfg, nf.as_deref(), ff.as_deref(), inject_table1, &out),
        Command::Report { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(keys_help()).try_get_matches();
    let cli = match matches.and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
