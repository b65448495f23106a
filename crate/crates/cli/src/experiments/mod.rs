//! Named pipelines. Each returns its checks, diagnostics and data tables;
//! persistence is handled by the caller.

use std::path::Path;

use fklab::discretize::Grid;
use fklab::model::{KernelSpec, PotentialShape, PotentialSpec};
use fklab::montecarlo::SimScheme;

use crate::config::{ExperimentConfig, ExperimentName};
use crate::report::{Check, PlotKind, PlotTable, Table};
use crate::{CliError, RunOptions};

mod chain;
mod ground_state;
mod inequality;
mod iuc;
mod mc;
mod rates;
mod spectrum;
mod valley;

pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub options: &'a RunOptions,
    pub out_dir: &'a Path,
}

#[derive(Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
    pub plots: Vec<PlotTable>,
    /// Comma-separated data files, written as `<name>.csv`.
    pub tables: Vec<(String, Table)>,
}

impl Outcome {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    fn record<T: serde::Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("diagnostic serializes");
        self.diagnostics.insert(key.to_owned(), v);
    }
}

pub fn run(ctx: &Context) -> Result<Outcome, CliError> {
    match ctx.config.experiment {
        ExperimentName::Spectrum => spectrum::run(ctx),
        ExperimentName::IucDichotomy => iuc::run(ctx),
        ExperimentName::GroundStateFit => ground_state::run(ctx),
        ExperimentName::RatesTable => rates::run(ctx),
        ExperimentName::McLemmas => mc::run(ctx),
        ExperimentName::ChainBound => chain::run(ctx),
        ExperimentName::Valley => valley::run(ctx),
        ExperimentName::InequalitySuite => inequality::run(ctx),
    }
}

fn scheme(
    ctx: &Context,
    kernel: &KernelSpec,
    eps_cut: f64,
    dt: f64,
) -> Result<SimScheme, CliError> {
    let s = &ctx.config.scheme;
    Ok(SimScheme::new(kernel, eps_cut, dt, s.seed, s.workers)?)
}

fn power_theta(potential: &PotentialSpec) -> Result<f64, CliError> {
    match potential.shape {
        PotentialShape::Power { theta, .. } => Ok(theta),
        _ => Err(CliError::Config(
            "this experiment needs a power potential".into(),
        )),
    }
}

fn phi1_trace(grid: &Grid, phi: &[f64], v: &[f64], tag: Option<String>) -> PlotTable {
    let mut t = PlotTable::new(PlotKind::Phi1Trace, tag);
    for i in 0..grid.n {
        t.table.push(&[grid.x(i), phi[i], phi[i].ln(), v[i]]);
    }
    t
}

fn write_binary(
    ctx: &Context,
    name: &str,
    f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let path = ctx.out_dir.join(name);
    let io = |e| CliError::Io {
        path: path.clone(),
        source: e,
    };
    let file = std::fs::File::create(&path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w).map_err(io)?;
    std::io::Write::flush(&mut w).map_err(io)
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn fmt_theta(theta: f64) -> String {
    format!("theta_{theta}")
}
