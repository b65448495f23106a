use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use fklab_cli::{
    emit_plot_data, run_experiment, CliError, ExperimentConfig, ExperimentName, Report, RunOptions,
    EXIT_CONFIG, EXIT_OK,
};

#[derive(Parser, Debug)]
#[command(
    name = "fklab",
    version,
    about = "Run a named Feynman-Kac experiment from a JSON config"
)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH", required_unless_present = "emit_plot")]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// RNG seed, overriding `scheme.seed`.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Pipeline name, overriding `experiment`.
    #[arg(long, value_name = "NAME")]
    experiment: Option<String>,
    /// Monte Carlo worker threads, overriding `scheme.workers`.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Also write the assembled operator to `operator.bin`.
    #[arg(long)]
    export_matrix: bool,
    /// Also write recorded Monte Carlo paths to `paths.bin`.
    #[arg(long)]
    dump_paths: bool,
    /// Write plot data of this kind from an existing report instead of running.
    #[arg(long, value_name = "KIND", conflicts_with = "config")]
    emit_plot: Option<String>,
    /// Report read by `--emit-plot` (default: `<out>/report.json`).
    #[arg(long, value_name = "PATH", requires = "emit_plot")]
    report: Option<PathBuf>,
}

fn load_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let path = args.config.as_ref().expect("clap enforces --config");
    let mut config = ExperimentConfig::load(path)?;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.scheme.seed = seed;
    }
    if let Some(name) = &args.experiment {
        config.experiment = name.parse::<ExperimentName>()?;
    }
    if let Some(threads) = args.threads {
        config.scheme.workers = threads;
    }
    Ok(config)
}

fn emit(args: &Args, kind: &str) -> Result<i32, CliError> {
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let path = args
        .report
        .clone()
        .unwrap_or_else(|| dir.join(fklab_cli::report::REPORT_FILE));
    let report = Report::load(&path)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| path.parent().map(PathBuf::from))
        .unwrap_or_default();
    for file in emit_plot_data(&report, kind, &out_dir)? {
        println!("{}", file.display());
    }
    Ok(EXIT_OK)
}

fn run(args: &Args) -> Result<i32, CliError> {
    if let Some(kind) = &args.emit_plot {
        return emit(args, kind);
    }
    let config = load_config(args)?;
    let options = RunOptions {
        export_matrix: args.export_matrix,
        dump_paths: args.dump_paths,
    };
    let outcome = run_experiment(&config, &options)?;
    for check in &outcome.report.checks {
        let tag = if check.passed { "ok" } else { "FAILED" };
        println!("{tag:>6}  {}: {}", check.name, check.detail);
    }
    for name in &outcome.report.failed_invariants {
        eprintln!("assertion failed: {name}");
    }
    println!("artifacts in {}", outcome.out_dir.display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            return ExitCode::from(code as u8);
        }
    };
    match run(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
