use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::{Format, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unknown names, malformed config or unsupported input (exit 2).
    #[error("{0}")]
    Invalid(String),
    /// A computation ran but its result cannot be trusted (exit 1).
    #[error("{0}")]
    Untrusted(String),
}

#[derive(Parser, Debug)]
#[command(name = "mbcascade", version, about = "Morse-Bott cascade homology and companion verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random choice (default 7).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report file (default: <command>.json or .csv in the working directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Flow integrations allowed per critical pair.
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long = "tol-match", global = true)]
    tol_match: Option<f64>,
    #[arg(long = "tol-refine", global = true)]
    tol_refine: Option<f64>,
    #[arg(long = "tol-dedup", global = true)]
    tol_dedup: Option<f64>,
    /// Threshold for operator identity residuals.
    #[arg(long = "tol-residual", global = true)]
    tol_residual: Option<f64>,
    /// Threshold for spectra against the closed forms.
    #[arg(long = "tol-spectrum", global = true)]
    tol_spectrum: Option<f64>,
    /// Threshold for the moment map identity.
    #[arg(long = "tol-identity", global = true)]
    tol_identity: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the cascade chain complex of a compact example and compute its homology.
    Homology { example: Option<String> },
    /// Verify the path-space operator identities on a dyadic grid.
    Involutions {
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        /// Complex dimension n.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Novikov field arithmetic.
    Novikov {
        #[command(subcommand)]
        command: NovikovCommand,
    },
    /// Moment map identity and regularity/freeness of the zero level.
    Moment {
        action: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        tau: Option<f64>,
        /// Newton starts for the zero-level check.
        #[arg(long)]
        samples: Option<usize>,
        /// Random points for the identity check.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Integrate the negative gradient flow from a point.
    Flow {
        example: Option<String>,
        /// Comma-separated ambient coordinates.
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
        start: Vec<f64>,
    },
    /// Search for cascade flow lines between two critical points.
    Cascades {
        example: Option<String>,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        /// Number of cascades; omit to count over all m.
        #[arg(long)]
        m: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
enum NovikovCommand {
    /// Inversion round trips and grading checks on random elements.
    Selftest {
        #[arg(long)]
        count: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = commands::Context::new(&cli.common, cfg);
    let (name, outcome) = match cli.command {
        Command::Homology { example } => ("homology", commands::homology(&ctx, example)?),
        Command::Involutions { kmax, grid, dim } => ("involutions", commands::involutions(&ctx, kmax, grid, dim)?),
        Command::Novikov { command: NovikovCommand::Selftest { count } } => ("novikov", commands::novikov_selftest(&ctx, count)?),
        Command::Moment { action, tau, samples, points } => ("moment", commands::moment(&ctx, action, tau, samples, points)?),
        Command::Flow { example, start } => ("flow", commands::flow(&ctx, example, start)?),
        Command::Cascades { example, from, to, m } => ("cascades", commands::cascades(&ctx, example, &from, &to, m)?),
    };
    ctx.emit(name, &outcome)?;
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Untrusted(_) => 1,
                CliError::Invalid(_) => 2,
            })
        }
    }
}
