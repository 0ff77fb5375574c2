use serde::{Deserialize, Serialize};

use super::experiment::ReplicationReport;
use super::scenario::ScenarioConfig;
use crate::error::{PacsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub method: String,
    pub covariate: String,
    pub role: String,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteRow {
    pub method: String,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTables {
    pub frequency: Vec<FrequencyRow>,
    pub ate: Vec<AteRow>,
    pub runtime: Vec<RuntimeRow>,
}

/// Serializes rows (header first) to CSV text.
pub fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub const FREQUENCY_HEADER: [&str; 4] = ["method", "covariate", "role", "frequency"];
pub const ATE_HEADER: [&str; 6] = ["method", "mean", "bias", "sd", "rmse", "n_failed"];
pub const RUNTIME_HEADER: [&str; 5] = ["method", "n", "p", "m", "seconds"];

impl SummaryTables {
    pub fn frequency_csv(&self) -> String {
        to_csv(&self.frequency, &FREQUENCY_HEADER)
    }

    pub fn ate_csv(&self) -> String {
        to_csv(&self.ate, &ATE_HEADER)
    }

    pub fn runtime_csv(&self) -> String {
        to_csv(&self.runtime, &RUNTIME_HEADER)
    }
}

/// Mean and sample standard deviation (`n - 1` denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Builds frequency, ATE and runtime tables for one experiment cell.
pub fn summarize(reports: &[ReplicationReport], cfg: &ScenarioConfig) -> Result<SummaryTables> {
    if reports.is_empty() {
        return Err(PacsError::Config("no reports to summarize".into()));
    }
    let truth = cfg.true_ate();
    let mut tables = SummaryTables::default();
    for r in reports {
        let method = r.method.label().to_string();
        for (j, f) in r.frequencies().into_iter().enumerate() {
            tables.frequency.push(FrequencyRow {
                method: method.clone(),
                covariate: format!("x{}", j + 1),
                role: cfg
                    .roles
                    .role_of(j)
                    .map(|r| r.label())
                    .unwrap_or("unknown")
                    .to_string(),
                frequency: f,
            });
        }
        let (mean, sd) = mean_sd(&r.ate_estimates);
        let rmse = if r.ate_estimates.is_empty() {
            f64::NAN
        } else {
            (r.ate_estimates.iter().map(|a| (a - truth).powi(2)).sum::<f64>()
                / r.ate_estimates.len() as f64)
                .sqrt()
        };
        tables.ate.push(AteRow {
            method: method.clone(),
            mean,
            bias: mean - truth,
            sd,
            rmse,
            n_failed: r.failures.len(),
        });
        tables.runtime.push(RuntimeRow {
            method,
            n: r.n,
            p: r.p,
            m: r.m,
            seconds: r.wall_clock_total.as_secs_f64(),
        });
    }
    Ok(tables)
}

/// Method label with one optional runtime per cell.
pub type RuntimeLine = (String, Vec<Option<f64>>);

/// Wide runtime layout: one row per method, one column per `(n, p)` cell in
/// first-seen order.
pub fn runtime_layout(rows: &[RuntimeRow]) -> (Vec<String>, Vec<RuntimeLine>) {
    let mut cells: Vec<(usize, usize)> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for r in rows {
        if !cells.contains(&(r.n, r.p)) {
            cells.push((r.n, r.p));
        }
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let header = cells.iter().map(|(n, p)| format!("n={n} p={p}")).collect();
    let table = methods
        .into_iter()
        .map(|m| {
            let vals = cells
                .iter()
                .map(|&(n, p)| {
                    rows.iter()
                        .find(|r| r.method == m && r.n == n && r.p == p)
                        .map(|r| r.seconds)
                })
                .collect();
            (m, vals)
        })
        .collect();
    (header, table)
}
