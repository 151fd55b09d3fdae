//! Command-line driver: `run`, `table` and `predict`.
//!
//! Exit codes: 0 on success, 1 for configuration or input errors, 2 for
//! runtime failures (I/O, failed or panicking trials).

pub mod config;
pub mod report;
pub mod table;

use std::ffi::OsString;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::bench::benchmark;

use config::{load_config, RunConfig};
use report::{run_trial, summary_csv, trials_csv, ModelReport, RunReport, TrialReport};
use table::build_table;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Input(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gp-rvm",
    version,
    about = "GP feature generation with sparse Bayesian selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run trials on a benchmark and write JSON and CSV reports.
    Run(RunArgs),
    /// Render summary tables from run reports.
    Table(TableArgs),
    /// Evaluate a stored model at input points.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Benchmark name; selects the shipped defaults when no config is given.
    #[arg(long)]
    pub benchmark: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Base seed; trial k uses seed + k.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run trials on a worker pool.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Report JSON files written by `run`.
    pub reports: Vec<PathBuf>,
    /// Emit CSV instead of aligned text.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model JSON, or a run report together with `--trial`.
    #[arg(long)]
    pub model: PathBuf,
    /// Trial to use when `--model` is a run report.
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    /// Input points, `x` or `x,y`.
    #[arg(allow_negative_numbers = true, required = true)]
    pub points: Vec<String>,
}

/// Resolves the effective configuration from flags and an optional file.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match (&args.config, &args.benchmark) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => RunConfig::defaults_for(name)?,
        (None, None) => {
            return Err(CliError::Usage("run needs --benchmark or --config".into()));
        }
    };
    if let Some(name) = &args.benchmark {
        let spec = benchmark(name).map_err(|e| CliError::Config(e.to_string()))?;
        if spec.family != cfg.mode {
            return Err(CliError::Config(format!(
                "--benchmark {name} does not match config mode {:?}",
                cfg.mode
            )));
        }
        cfg.benchmark = spec.name.to_string();
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Executes every trial; the result order is the trial order regardless of
/// scheduling.
pub fn execute(cfg: &RunConfig, parallel: bool) -> Result<RunReport, CliError> {
    let spec = benchmark(&cfg.benchmark).map_err(|e| CliError::Config(e.to_string()))?;
    let kcfg = cfg.kaizen_config()?;
    let one = |k: usize| -> Result<TrialReport, CliError> {
        catch_unwind(AssertUnwindSafe(|| run_trial(spec, &kcfg, cfg.seed, k))).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(CliError::Runtime(format!("trial {k} panicked: {msg}")))
        })
    };
    let results: Vec<Result<TrialReport, CliError>> = if parallel {
        (0..cfg.trials).into_par_iter().map(one).collect()
    } else {
        (0..cfg.trials).map(one).collect()
    };
    let trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(RunReport::new(cfg.clone(), spec.family, trials))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Writes `<benchmark>.json`, `<benchmark>.trials.csv` and
/// `<benchmark>.summary.csv` into the output directory.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let base = &report.benchmark;
    let files = [
        (dir.join(format!("{base}.json")), report.to_json()),
        (dir.join(format!("{base}.trials.csv")), trials_csv(report)?),
        (
            dir.join(format!("{base}.summary.csv")),
            summary_csv(report)?,
        ),
    ];
    for (path, body) in &files {
        write(path, body)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

pub fn cmd_run(args: &RunArgs) -> Result<String, CliError> {
    let cfg = resolve_config(args)?;
    let report = execute(&cfg, args.parallel)?;
    let paths = write_report(&report, &cfg.output.dir)?;
    let a = &report.aggregate;
    let mut out = format!(
        "{}: {}/{} successful trials\n",
        report.benchmark, a.successes, a.trials
    );
    for p in paths {
        out.push_str(&format!("wrote {}\n", p.display()));
    }
    Ok(out)
}

pub fn cmd_table(args: &TableArgs) -> Result<String, CliError> {
    let reports = args
        .reports
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            RunReport::from_json(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let t = build_table(&reports)?;
    if args.csv {
        t.to_csv()
    } else {
        Ok(t.to_text())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModelFile {
    Model(ModelReport),
    Report(Box<RunReport>),
}

/// Loads a model from a model JSON or from trial `trial` of a run report.
pub fn load_model(text: &str, trial: usize) -> Result<ModelReport, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("model file: {e}")))?;
    let file: ModelFile = serde_json::from_value(value)
        .map_err(|_| CliError::Input("model file is neither a model nor a run report".into()))?;
    match file {
        ModelFile::Model(m) => Ok(m),
        ModelFile::Report(r) => r
            .trials
            .into_iter()
            .nth(trial)
            .map(|t| t.model)
            .ok_or_else(|| CliError::Input(format!("report has no trial {trial}"))),
    }
}

pub fn parse_point(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("bad input point `{s}`: {e}")))
        })
        .collect()
}

pub fn cmd_predict(args: &PredictArgs) -> Result<String, CliError> {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.model.display())))?;
    let model = load_model(&text, args.trial)?;
    let mut out = String::new();
    for p in &args.points {
        let y = model.predict(&parse_point(p)?)?;
        out.push_str(&format!("{y}\n"));
    }
    Ok(out)
}

pub fn dispatch(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Table(a) => cmd_table(a),
        Command::Predict(a) => cmd_predict(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 2);
        assert_eq!(main_with_args(["gp-rvm", "frobnicate"]), 1);
        assert_eq!(main_with_args(["gp-rvm", "table"]), 1);
    }

    #[test]
    fn points_parse() {
        assert_eq!(parse_point("9").unwrap(), vec![9.0]);
        assert_eq!(parse_point("1.5,-2").unwrap(), vec![1.5, -2.0]);
        assert!(parse_point("1,a").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "gp-rvm",
            "run",
            "--benchmark",
            "nguyen1",
            "--trials",
            "3",
            "--seed",
            "7",
        ])
        .unwrap();
        let Command::Run(args) = cli.command else {
            panic!("expected run")
        };
        let cfg = resolve_config(&args).unwrap();
        assert_eq!(
            (cfg.trials, cfg.seed, cfg.benchmark.as_str()),
            (3, 7, "nguyen1")
        );
        let cli = Cli::try_parse_from(["gp-rvm", "run"]).unwrap();
        let Command::Run(args) = cli.command else {
            panic!("expected run")
        };
        assert!(matches!(resolve_config(&args), Err(CliError::Usage(_))));
    }

    #[test]
    fn malformed_model_reports_position() {
        let err = load_model("{\n  \"dims\": 1,\n  oops\n}", 0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn empty_model_predicts_zero() {
        let m = r#"{"schema_version":1,"dims":1,"expression":"0","terms":[]}"#;
        let model = load_model(m, 0).unwrap();
        assert_eq!(model.predict(&[3.0]).unwrap(), 0.0);
    }
}
