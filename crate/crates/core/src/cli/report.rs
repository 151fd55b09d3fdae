//! Report schema. Non-finite numbers are stored as `null`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bench::{metrics, BenchmarkSpec, Family, Metrics};
use crate::expr::{evaluate, parse, Expr};
use crate::kaizen::{self, KaizenConfig, Standard, StopReason, TrialOutcome};

use super::config::RunConfig;
use super::CliError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: Option<f64>,
    pub max_abs_error: Option<f64>,
    pub raw_fitness: Option<f64>,
}

impl From<Metrics> for MetricsReport {
    fn from(m: Metrics) -> Self {
        MetricsReport {
            rmse: finite(m.rmse),
            max_abs_error: finite(m.max_abs_error),
            raw_fitness: finite(m.raw_fitness),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermReport {
    pub weight: f64,
    pub expression: String,
}

/// A fitted model: the flat weighted sum plus its terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub schema_version: u32,
    pub dims: usize,
    pub expression: String,
    pub terms: Vec<TermReport>,
}

impl ModelReport {
    pub fn from_standard(standard: &Standard, dims: usize) -> ModelReport {
        ModelReport {
            schema_version: REPORT_SCHEMA_VERSION,
            dims,
            expression: standard.expression().to_string(),
            terms: standard
                .terms
                .iter()
                .map(|t| TermReport {
                    weight: t.weight,
                    expression: t.expr.to_string(),
                })
                .collect(),
        }
    }

    pub fn parsed(&self) -> Result<Expr, CliError> {
        parse(&self.expression).map_err(|e| CliError::Input(format!("model expression: {e}")))
    }

    pub fn predict(&self, point: &[f64]) -> Result<f64, CliError> {
        if point.len() != self.dims {
            return Err(CliError::Input(format!(
                "model takes {} input(s), got {}",
                self.dims,
                point.len()
            )));
        }
        Ok(self.parsed()?.eval_point(point))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub benchmark: String,
    pub seed: u64,
    pub success: bool,
    pub stop: StopReason,
    pub generations: usize,
    pub adj_r2: Option<f64>,
    pub train: MetricsReport,
    pub test: MetricsReport,
    pub nfes: u64,
    pub node_evals: u64,
    pub cache_hits: u64,
    /// Seconds; the only field that varies between identical runs.
    pub wall_time: f64,
    pub model: ModelReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    /// Number of finite values summarized.
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub mean: f64,
}

impl StatSummary {
    /// Order statistics over the finite entries; `None` if there are none.
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Option<StatSummary> {
        let v: Vec<f64> = values
            .into_iter()
            .flatten()
            .filter(|x| x.is_finite())
            .collect();
        crate::bench::summarize(&v).map(|s| StatSummary {
            count: v.len(),
            min: s.min,
            median: s.median,
            max: s.max,
            mean: s.mean,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub successes: usize,
    pub adj_r2: Option<StatSummary>,
    pub train_rmse: Option<StatSummary>,
    pub test_rmse: Option<StatSummary>,
    pub max_abs_error: Option<StatSummary>,
    pub raw_fitness: Option<StatSummary>,
    pub nfes: Option<StatSummary>,
    pub node_evals: Option<StatSummary>,
}

impl Aggregate {
    pub fn of(trials: &[TrialReport]) -> Aggregate {
        let stat = |f: &dyn Fn(&TrialReport) -> Option<f64>| StatSummary::of(trials.iter().map(f));
        Aggregate {
            trials: trials.len(),
            successes: trials.iter().filter(|t| t.success).count(),
            adj_r2: stat(&|t| t.adj_r2),
            train_rmse: stat(&|t| t.train.rmse),
            test_rmse: stat(&|t| t.test.rmse),
            max_abs_error: stat(&|t| t.train.max_abs_error),
            raw_fitness: stat(&|t| t.train.raw_fitness),
            nfes: stat(&|t| Some(t.nfes as f64)),
            node_evals: stat(&|t| Some(t.node_evals as f64)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub benchmark: String,
    pub family: Family,
    pub config: RunConfig,
    pub trials: Vec<TrialReport>,
    pub aggregate: Aggregate,
}

impl RunReport {
    pub fn new(config: RunConfig, family: Family, trials: Vec<TrialReport>) -> RunReport {
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            benchmark: config.benchmark.clone(),
            family,
            aggregate: Aggregate::of(&trials),
            config,
            trials,
        }
    }

    pub fn from_json(text: &str) -> Result<RunReport, CliError> {
        let r: RunReport =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("report: {e}")))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "report schema_version {} is not supported",
                r.schema_version
            )));
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs trial `index` with seed `base_seed + index`.
pub fn run_trial(
    spec: &BenchmarkSpec,
    cfg: &KaizenConfig,
    base_seed: u64,
    index: usize,
) -> Result<TrialReport, CliError> {
    let seed = base_seed.wrapping_add(index as u64);
    let start = Instant::now();
    let (train, test) = spec
        .datasets(seed)
        .map_err(|e| CliError::Runtime(format!("trial {index}: {e}")))?;
    let out: TrialOutcome = kaizen::run(cfg, &train, seed)
        .map_err(|e| CliError::Runtime(format!("trial {index}: {e}")))?;
    let test_metrics = match evaluate(&out.standard.expression(), &test.inputs) {
        Ok(y) => metrics(&y, &test.target).into(),
        Err(_) => MetricsReport {
            rmse: None,
            max_abs_error: None,
            raw_fitness: None,
        },
    };
    Ok(TrialReport {
        trial: index,
        benchmark: spec.name.to_string(),
        seed,
        success: out.success,
        stop: out.stop,
        generations: out.generations,
        adj_r2: finite(out.standard.fitness),
        train: out.train.into(),
        test: test_metrics,
        nfes: out.counters.nfes,
        node_evals: out.counters.node_evals,
        cache_hits: out.counters.hits,
        wall_time: start.elapsed().as_secs_f64(),
        model: ModelReport::from_standard(&out.standard, spec.dims),
    })
}

pub const TRIALS_CSV_HEADER: &[&str] = &[
    "schema_version",
    "benchmark",
    "trial",
    "seed",
    "success",
    "stop",
    "generations",
    "adj_r2",
    "train_rmse",
    "test_rmse",
    "max_abs_error",
    "raw_fitness",
    "nfes",
    "node_evals",
    "wall_time",
    "expression",
];

pub const SUMMARY_CSV_HEADER: &[&str] = &[
    "schema_version",
    "benchmark",
    "stat",
    "adj_r2",
    "train_rmse",
    "test_rmse",
    "max_abs_error",
    "raw_fitness",
    "nfes",
    "node_evals",
    "successes",
    "trials",
];

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

pub fn trials_csv(report: &RunReport) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(vec![]);
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(TRIALS_CSV_HEADER).map_err(io)?;
    for t in &report.trials {
        let stop = serde_json::to_value(t.stop).expect("stop serializes");
        w.write_record([
            REPORT_SCHEMA_VERSION.to_string(),
            t.benchmark.clone(),
            t.trial.to_string(),
            t.seed.to_string(),
            t.success.to_string(),
            stop.as_str().unwrap_or_default().to_string(),
            t.generations.to_string(),
            cell(t.adj_r2),
            cell(t.train.rmse),
            cell(t.test.rmse),
            cell(t.train.max_abs_error),
            cell(t.train.raw_fitness),
            t.nfes.to_string(),
            t.node_evals.to_string(),
            format!("{:?}", t.wall_time),
            t.model.expression.clone(),
        ])
        .map_err(io)?;
    }
    finish_csv(w)
}

/// One row per statistic (min, median, max, mean).
pub fn summary_csv(report: &RunReport) -> Result<String, CliError> {
    let a = &report.aggregate;
    let mut w = csv::Writer::from_writer(vec![]);
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(SUMMARY_CSV_HEADER).map_err(io)?;
    let cols = [
        &a.adj_r2,
        &a.train_rmse,
        &a.test_rmse,
        &a.max_abs_error,
        &a.raw_fitness,
        &a.nfes,
        &a.node_evals,
    ];
    let pick: [(&str, fn(&StatSummary) -> f64); 4] = [
        ("min", |s| s.min),
        ("median", |s| s.median),
        ("max", |s| s.max),
        ("mean", |s| s.mean),
    ];
    for (name, f) in pick {
        let mut row = vec![
            REPORT_SCHEMA_VERSION.to_string(),
            report.benchmark.clone(),
            name.to_string(),
        ];
        row.extend(cols.iter().map(|c| cell(c.as_ref().map(f))));
        row.push(a.successes.to_string());
        row.push(a.trials.to_string());
        w.write_record(&row).map_err(io)?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
