//! Summary tables: min/median/max blocks for keijzer reports, one row of
//! averages per nguyen report.

use crate::bench::Family;

use super::report::{RunReport, StatSummary};
use super::CliError;

/// Three significant digits in scientific notation, e.g. `1.00E+00`.
pub fn sci(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let s = format!("{x:.2e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}E{sign}{:02}", exp.abs())
}

fn opt_sci(x: Option<f64>) -> String {
    x.map(sci).unwrap_or_else(|| "-".into())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(vec![]);
        let io = |e: csv::Error| CliError::Runtime(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn build_table(reports: &[RunReport]) -> Result<Table, CliError> {
    let first = reports
        .first()
        .ok_or_else(|| CliError::Usage("table needs at least one report".into()))?;
    if let Some(other) = reports.iter().find(|r| r.family != first.family) {
        return Err(CliError::Input(format!(
            "cannot tabulate {} together with {}: benchmark families differ",
            first.benchmark, other.benchmark
        )));
    }
    Ok(match first.family {
        Family::Keijzer => keijzer_table(reports),
        Family::Nguyen => nguyen_table(reports),
    })
}

fn keijzer_table(reports: &[RunReport]) -> Table {
    let header = ["F", "Stat.", "Adj. R2", "RMSE", "NFEs"];
    let mut rows = vec![];
    for r in reports {
        let a = &r.aggregate;
        let stats: [(&str, fn(&StatSummary) -> f64); 3] = [
            ("Min", |s| s.min),
            ("Med.", |s| s.median),
            ("Max", |s| s.max),
        ];
        for (i, (label, f)) in stats.into_iter().enumerate() {
            let name = if i == 1 {
                r.benchmark.clone()
            } else {
                String::new()
            };
            rows.push(vec![
                name,
                label.to_string(),
                opt_sci(a.adj_r2.as_ref().map(f)),
                opt_sci(a.train_rmse.as_ref().map(f)),
                a.nfes
                    .as_ref()
                    .map(|s| format!("{}", f(s).round() as u64))
                    .unwrap_or_else(|| "-".into()),
            ]);
        }
    }
    Table {
        header: header.map(String::from).to_vec(),
        rows,
    }
}

fn nguyen_table(reports: &[RunReport]) -> Table {
    let header = [
        "Problem",
        "Max. Error",
        "Raw Fitness",
        "RMSE Training",
        "Func. Eval.",
        "Node Eval.",
        "RMSE Testing",
        "Succ. Runs",
    ];
    let mean = |s: &Option<StatSummary>| opt_sci(s.as_ref().map(|s| s.mean));
    let rows = reports
        .iter()
        .map(|r| {
            let a = &r.aggregate;
            vec![
                r.benchmark.clone(),
                mean(&a.max_abs_error),
                mean(&a.raw_fitness),
                mean(&a.train_rmse),
                mean(&a.nfes),
                mean(&a.node_evals),
                mean(&a.test_rmse),
                a.successes.to_string(),
            ]
        })
        .collect();
    Table {
        header: header.map(String::from).to_vec(),
        rows,
    }
}
