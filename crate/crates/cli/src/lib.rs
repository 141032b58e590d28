//! Config-driven experiment runner over `ncergodic`.
//!
//! One TOML document describes a run; the runner writes
//! `<experiment>.csv` and `<experiment>.report.toml` into the output
//! directory. See `docs/config.md` and `docs/csv.md`.

pub mod config;
pub mod csv;
pub mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{parse_config, ConfigError, Experiment, ExperimentConfig};
pub use csv::{CsvTable, WriteError};
pub use run::{run_experiment, Outcome, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Write(#[from] WriteError),
    #[error("{0}")]
    Numeric(#[from] ncergodic::Error),
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config(&text)?)
}

pub struct Written {
    pub outcome: Outcome,
    pub csv: PathBuf,
    pub report: PathBuf,
}

/// Runs `cfg` and writes its CSV and report into `out_dir`.
pub fn execute(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Written, CliError> {
    cfg.validate()?;
    let outcome = run_experiment(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|source| WriteError {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let name = cfg.experiment.name();
    let csv = out_dir.join(format!("{name}.csv"));
    let report = out_dir.join(format!("{name}.report.toml"));
    csv::write_atomic(&csv, &outcome.table.render(&cfg.digest(), cfg.seed))?;
    csv::write_atomic(&report, &outcome.report.to_toml())?;
    Ok(Written { outcome, csv, report })
}
