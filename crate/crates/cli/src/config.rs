//! Config-file handling, CLI>file>default precedence helpers, and the
//! error-to-exit-code mapping.

use std::fmt;
use std::path::{Path, PathBuf};

use hpcore::objective::AnalogConstraint;

/// JSON experiment config; every field is optional so command-line flags
/// can override or fill in.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub b: Option<usize>,
    pub n: Option<usize>,
    pub l: Option<usize>,
    pub m: Option<usize>,
    pub noise_var: Option<f64>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub kind: Option<String>,
    pub constraint: Option<String>,
    pub k: Option<usize>,
    pub i_max: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub init_step: Option<f64>,
    pub fd_step: Option<f64>,
    pub epsilon: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub n_e: Option<usize>,
    pub snr_grid: Option<Vec<f64>>,
    pub fixed_step: Option<f64>,
    pub fixed_iters: Option<usize>,
    pub threads: Option<usize>,
    pub dataset: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_schedule: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn config<E: fmt::Display>(e: E) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn io<E: fmt::Display>(e: E) -> Self {
        CliError::Io(e.to_string())
    }

    pub fn numeric<E: fmt::Display>(e: E) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Io(m) => write!(f, "io: {m}"),
            CliError::Numeric(m) => write!(f, "numerical: {m}"),
        }
    }
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(CliError::io)?;
            serde_json::from_str(&text).map_err(CliError::config)
        }
    }
}

/// HPCLI_SEED overrides every configured seed when set.
pub fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var("HPCLI_SEED") {
        Err(_) => Ok(None),
        Ok(v) => v
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("HPCLI_SEED is not an integer: {v:?}"))),
    }
}

pub fn parse_constraint(name: Option<String>) -> Result<AnalogConstraint, CliError> {
    match name.as_deref() {
        None | Some("unconstrained") => Ok(AnalogConstraint::Unconstrained),
        Some("phase-shifter") => Ok(AnalogConstraint::PhaseShifter),
        Some(other) => Err(CliError::Config(format!(
            "unknown constraint {other:?} (expected unconstrained or phase-shifter)"
        ))),
    }
}

/// Precedence helper: command-line value, then config file, then error (or
/// caller-supplied default via `Option::or`).
pub struct Overrides<'a> {
    pub file: &'a FileConfig,
}

impl Overrides<'_> {
    pub fn usize_of(
        &self,
        cli: Option<usize>,
        from_file: impl Fn(&FileConfig) -> Option<usize>,
        name: &str,
    ) -> Result<usize, CliError> {
        cli.or_else(|| from_file(self.file))
            .ok_or_else(|| CliError::Config(format!("missing required value --{name}")))
    }

    pub fn path_of(
        &self,
        cli: Option<PathBuf>,
        from_file: impl Fn(&FileConfig) -> Option<PathBuf>,
        name: &str,
    ) -> Result<PathBuf, CliError> {
        cli.or_else(|| from_file(self.file))
            .ok_or_else(|| CliError::Config(format!("missing required value --{name}")))
    }
}
