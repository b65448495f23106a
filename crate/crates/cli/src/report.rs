//! Report structure, artifact writers and plot-data emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentName;
use crate::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved-config.json";
pub const FAILED_MARKER: &str = "FAILED";

/// One named invariant with its outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlotKind {
    #[serde(rename = "phi1_trace")]
    Phi1Trace,
    #[serde(rename = "envelope_overlay")]
    EnvelopeOverlay,
    #[serde(rename = "iuc_ratio_vs_R")]
    IucRatioVsR,
    #[serde(rename = "rate_functions")]
    RateFunctions,
    #[serde(rename = "mc_scaling")]
    McScaling,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [
        PlotKind::Phi1Trace,
        PlotKind::EnvelopeOverlay,
        PlotKind::IucRatioVsR,
        PlotKind::RateFunctions,
        PlotKind::McScaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Phi1Trace => "phi1_trace",
            PlotKind::EnvelopeOverlay => "envelope_overlay",
            PlotKind::IucRatioVsR => "iuc_ratio_vs_R",
            PlotKind::RateFunctions => "rate_functions",
            PlotKind::McScaling => "mc_scaling",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            PlotKind::Phi1Trace => &["x", "phi1", "log_phi1", "V"],
            PlotKind::EnvelopeOverlay => &["x", "neg_log_phi1", "lower_exp", "upper_exp"],
            PlotKind::IucRatioVsR => &["R", "t", "Lambda"],
            PlotKind::RateFunctions => {
                &["s", "ln_beta", "ln_gamma", "ln_beta_hat", "ln_beta_tilde"]
            }
            PlotKind::McScaling => &["r", "median_exit", "exited_fraction", "collapsed"],
        }
    }

    pub fn parse(kind: &str) -> Result<Self, CliError> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == kind)
            .ok_or_else(|| {
                let known: Vec<&str> = PlotKind::ALL.iter().map(|k| k.name()).collect();
                CliError::Usage(format!(
                    "unknown plot kind `{kind}`; expected one of {}",
                    known.join(", ")
                ))
            })
    }
}

/// Columnar data; non-finite values are stored as `null`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows
            .push(row.iter().map(|v| v.is_finite().then_some(*v)).collect());
    }

    fn write(&self, path: &Path, delimiter: u8) -> Result<(), CliError> {
        let io = |e: csv::Error| CliError::Io {
            path: path.to_owned(),
            source: e.into(),
        };
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_path(path)
            .map_err(io)?;
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| match v {
                Some(x) => format!("{x:?}"),
                None => "nan".to_owned(),
            }))
            .map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io {
            path: path.to_owned(),
            source: e,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        self.write(path, b',')
    }
}

/// A plot table; `tag` distinguishes several tables of one kind.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlotTable {
    pub kind: PlotKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub table: Table,
}

impl PlotTable {
    pub fn new(kind: PlotKind, tag: Option<String>) -> Self {
        PlotTable {
            kind,
            tag,
            table: Table::new(kind.columns()),
        }
    }

    pub fn file_name(&self) -> String {
        match &self.tag {
            Some(tag) => format!("{}_{tag}.dat", self.kind.name()),
            None => format!("{}.dat", self.kind.name()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub experiment: ExperimentName,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub timestamp: u64,
    pub seed: u64,
    pub status: Status,
    pub failed_invariants: Vec<String>,
    pub checks: Vec<Check>,
    pub diagnostics: serde_json::Value,
    pub plot_data: Vec<PlotTable>,
}

impl Report {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_owned(),
            source: e,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{} is not a report: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Writes every table of `kind` held by the report as whitespace-separated
/// columns with a one-line header, returning the files written.
pub fn emit_plot_data(report: &Report, kind: &str, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let kind = PlotKind::parse(kind)?;
    let tables: Vec<&PlotTable> = report.plot_data.iter().filter(|t| t.kind == kind).collect();
    if tables.is_empty() {
        return Err(CliError::Usage(format!(
            "the {} report holds no {} data",
            report.experiment.as_str(),
            kind.name()
        )));
    }
    tables
        .into_iter()
        .map(|t| {
            let path = dir.join(t.file_name());
            t.table.write(&path, b' ')?;
            Ok(path)
        })
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_owned(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with(tables: Vec<PlotTable>) -> Report {
        Report {
            experiment: ExperimentName::Spectrum,
            timestamp: 0,
            seed: 1,
            status: Status::Passed,
            failed_invariants: vec![],
            checks: vec![],
            diagnostics: serde_json::Value::Null,
            plot_data: tables,
        }
    }

    #[test]
    fn plot_file_has_header_and_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = PlotTable::new(PlotKind::Phi1Trace, None);
        t.table.push(&[0.0, 0.5, 0.5f64.ln(), 0.0]);
        t.table.push(&[1.0, 0.0, f64::NEG_INFINITY, 1.0]);
        let files = emit_plot_data(&report_with(vec![t]), "phi1_trace", dir.path()).unwrap();
        let text = fs::read_to_string(&files[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x phi1 log_phi1 V");
        assert_eq!(lines[1].split_whitespace().count(), 4);
        assert_eq!(lines[2], "1.0 0.0 nan 1.0");
    }

    #[test]
    fn unknown_kind_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let r = report_with(vec![]);
        assert!(matches!(
            emit_plot_data(&r, "phi2_trace", dir.path()),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            emit_plot_data(&r, "mc_scaling", dir.path()),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn kinds_round_trip_through_json() {
        for k in PlotKind::ALL {
            let s = serde_json::to_string(&k).unwrap();
            assert_eq!(s, format!("\"{}\"", k.name()));
            assert_eq!(PlotKind::parse(k.name()).unwrap(), k);
        }
    }

    #[test]
    fn iuc_and_overlay_schemas() {
        assert_eq!(PlotKind::IucRatioVsR.columns(), ["R", "t", "Lambda"]);
        assert_eq!(
            PlotKind::EnvelopeOverlay.columns(),
            ["x", "neg_log_phi1", "lower_exp", "upper_exp"]
        );
    }
}
