//! Batch experiment runner.
//!
//! A run reads one JSON config, executes the named pipeline and leaves
//! `resolved-config.json`, `report.json`, CSV tables and plot files in the
//! output directory. Exit codes: 0 when every check passes, 2 when a check
//! fails, 3 for configuration and usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

pub mod config;
mod experiments;
pub mod report;

pub use config::{ExperimentConfig, ExperimentName};
pub use report::{emit_plot_data, Check, PlotKind, Report, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fklab::Error),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            // a failed numerical self-check is a scientific failure
            CliError::Core(fklab::Error::Solver(_) | fklab::Error::Assembly(_)) => EXIT_ASSERTION,
            CliError::Core(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Write the assembled operator to `operator.bin`.
    pub export_matrix: bool,
    /// Write recorded Monte Carlo paths to `paths.bin`.
    pub dump_paths: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.report.status {
            Status::Passed => EXIT_OK,
            Status::Failed => EXIT_ASSERTION,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn mark_failed(dir: &Path, message: &str) {
    // best effort: the primary error is reported regardless
    let _ = fs::write(dir.join(report::FAILED_MARKER), format!("{message}\n"));
}

/// Runs the configured pipeline and persists its artifacts.
///
/// Configuration errors are raised before anything is written. Once the
/// output directory exists, any later error leaves a `FAILED` marker next to
/// the partial outputs.
pub fn run_experiment(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let marker = dir.join(report::FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(io_err(&marker))?;
    }
    let result = persist(config, options, &dir);
    match &result {
        Ok(outcome) if outcome.report.status == Status::Failed => {
            mark_failed(&dir, &outcome.report.failed_invariants.join("\n"));
        }
        Ok(_) => {}
        Err(e) => mark_failed(&dir, &e.to_string()),
    }
    result
}

fn persist(
    config: &ExperimentConfig,
    options: &RunOptions,
    dir: &Path,
) -> Result<RunOutcome, CliError> {
    report::write_text(
        &dir.join(report::RESOLVED_CONFIG_FILE),
        &config.resolved_json(),
    )?;
    let ctx = experiments::Context {
        config,
        options,
        out_dir: dir,
    };
    let outcome = experiments::run(&ctx)?;
    for (name, table) in &outcome.tables {
        table.write_csv(&dir.join(format!("{name}.csv")))?;
    }
    let failed: Vec<String> = outcome
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let report = Report {
        experiment: config.experiment,
        timestamp,
        seed: config.scheme.seed,
        status: if failed.is_empty() {
            Status::Passed
        } else {
            Status::Failed
        },
        failed_invariants: failed,
        checks: outcome.checks,
        diagnostics: serde_json::Value::Object(outcome.diagnostics),
        plot_data: outcome.plots,
    };
    report::write_text(&dir.join(report::REPORT_FILE), &report.to_json())?;
    let mut kinds: Vec<PlotKind> = report.plot_data.iter().map(|t| t.kind).collect();
    kinds.dedup();
    for kind in kinds {
        emit_plot_data(&report, kind.name(), dir)?;
    }
    Ok(RunOutcome {
        report,
        out_dir: dir.to_owned(),
    })
}
