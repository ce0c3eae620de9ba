//! `macrocell` experiment runner.
//!
//! ```text
//! macrocell run --config <path> [--out <dir>] [--seed <int>] [--set key=value]...
//! macrocell list
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod config;
mod experiments;
mod output;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::Experiment;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(macrocell::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<macrocell::Error> for CliError {
    fn from(e: macrocell::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e)
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "macrocell", version, about = "Phase-cell experiments on small quantum many-body systems")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Dotted override such as `model.sites=6`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the experiment catalogue.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_max_level(level)
        .init();
    // sequential dense kernels keep floating-point results independent of the thread count
    faer::set_global_parallelism(faer::Par::Seq);

    match cli.command {
        Command::List => {
            for e in Experiment::ALL {
                println!("{:<22} {}", e.name(), e.summary());
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            out,
            seed,
            overrides,
        } => match run(config, out, seed, overrides) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                let report = json!({ "error": e.kind(), "message": e.to_string() });
                eprintln!("{report}");
                ExitCode::from(e.exit_code())
            }
        },
    }
}

fn run(path: PathBuf, out: Option<PathBuf>, seed: Option<u64>, mut overrides: Vec<String>) -> Result<(), CliError> {
    if let Some(seed) = seed {
        overrides.push(format!("seed={seed}"));
    }
    let mut config = config::load(&path, &overrides)?;
    if let Some(out) = out {
        config.output.dir = out;
    }
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    tracing::info!(experiment = config.experiment.name(), seed = config.seed, "running");
    let report = experiments::run(&config)?;
    let dir = &config.output.dir;
    let files = output::write_report(dir, config.output.format, &report.tables, &report.summary)?;
    let manifest = json!({
        "experiment": config.experiment.name(),
        "paper_anchor": config.experiment.paper_anchor(),
        "seed": config.seed,
        "config": config,
        "versions": {
            "macrocell": env!("CARGO_PKG_VERSION"),
            "faer": "0.24",
        },
        "files": files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect::<Vec<_>>(),
        "started_unix": started,
        "wall_clock_seconds": clock.elapsed().as_secs_f64(),
    });
    output::write_json(&dir.join("manifest.json"), &manifest)?;
    tracing::info!(dir = %dir.display(), "wrote {} files", files.len() + 1);
    Ok(())
}
