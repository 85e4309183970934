//! Run configuration: a TOML file mirroring the command-line flags.

use std::path::{Path, PathBuf};

use mbcascade::cascades::SearchParams;
use mbcascade::geometry::ProblemSpec;
use mbcascade::momentmap::ActionSpec;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub example: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub budget: Option<usize>,
    pub kmax: Option<usize>,
    pub grid: Option<usize>,
    pub dim: Option<usize>,
    pub tau: Option<f64>,
    pub samples: Option<usize>,
    pub count: Option<usize>,
    #[serde(default)]
    pub tol: Tolerances,
    pub search: Option<SearchParams>,
    pub problem: Option<ProblemSpec>,
    pub action: Option<ActionSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub match_tol: Option<f64>,
    pub refine: Option<f64>,
    pub dedup: Option<f64>,
    pub residual: Option<f64>,
    pub spectrum: Option<f64>,
    pub identity: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Invalid(format!("invalid config {}: {e}", path.display())))
    }
}

/// Seed used when neither the command line nor the config sets one.
pub const DEFAULT_SEED: u64 = 7;
