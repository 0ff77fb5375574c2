//! Paired Monte-Carlo experiments.
//!
//! Every replication draws one dataset and hands the same dataset to each
//! requested method in turn. Replications run on a rayon pool of the requested
//! size and are reduced in replication order, so reports do not depend on the
//! worker count (wall-clock fields aside).

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::generate::generate;
use super::oal::{oal_fit, OalConfig};
use super::replication_seed;
use super::scenario::ScenarioConfig;
use crate::data::Dataset;
use crate::error::{PacsError, Result};
use crate::pacs::{ipw_ate, pacs_fit, refit_propensity, PacsConfig, SelectionRule};
use crate::propensity::fit_logistic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    PacsAnd,
    PacsOr,
    Oal,
    /// IPW with the propensity fitted on every covariate.
    AllCovariates,
    /// IPW with the propensity fitted on the true target set.
    OracleTarget,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::PacsAnd,
        Method::PacsOr,
        Method::Oal,
        Method::AllCovariates,
        Method::OracleTarget,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::PacsAnd => "pacs_and",
            Method::PacsOr => "pacs_or",
            Method::Oal => "oal",
            Method::AllCovariates => "all_covariates",
            Method::OracleTarget => "oracle_target",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = PacsError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.label() == norm)
            .or(match norm.as_str() {
                "pacs" => Some(Method::PacsAnd),
                "all" => Some(Method::AllCovariates),
                "oracle" => Some(Method::OracleTarget),
                _ => None,
            })
            .ok_or_else(|| PacsError::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub workers: usize,
    /// Base PACS settings; the rule is overridden per method and the CV seed
    /// per replication.
    pub pacs: PacsConfig,
    pub oal: OalConfig,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            pacs: PacsConfig::default(),
            oal: OalConfig::default(),
        }
    }
}

/// Result of one method on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub selected: Vec<usize>,
    pub ate: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReport {
    pub method: Method,
    pub m: usize,
    pub p: usize,
    pub n: usize,
    pub selection_counts: Vec<usize>,
    /// ATE estimates of successful replications, in replication order.
    pub ate_estimates: Vec<f64>,
    pub wall_clock_total: Duration,
    pub per_replication_seeds: Vec<u64>,
    /// `(replication, error message)` for excluded replications.
    pub failures: Vec<(usize, String)>,
}

impl ReplicationReport {
    /// Replications that contributed to the aggregates.
    pub fn successes(&self) -> usize {
        self.m - self.failures.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let denom = self.successes().max(1) as f64;
        self.selection_counts.iter().map(|&c| c as f64 / denom).collect()
    }
}

fn run_method(
    method: Method,
    ds: &Dataset,
    cfg: &ScenarioConfig,
    opts: &ExperimentOptions,
    seed: u64,
) -> Result<MethodOutcome> {
    let start = Instant::now();
    let (selected, ate) = match method {
        Method::PacsAnd | Method::PacsOr => {
            let pacs_cfg = PacsConfig {
                rule: if method == Method::PacsAnd {
                    SelectionRule::And
                } else {
                    SelectionRule::Or
                },
                cv_seed: seed,
                ..opts.pacs.clone()
            };
            let res = pacs_fit(ds, &pacs_cfg)?;
            (res.selected, res.ate.value)
        }
        Method::Oal => {
            let res = oal_fit(ds, &opts.oal)?;
            (res.selected, res.ate)
        }
        Method::AllCovariates => {
            let fit = fit_logistic(ds, &opts.pacs.logistic())?;
            ((0..ds.p()).collect(), ipw_ate(ds, &fit.p_hat)?.value)
        }
        Method::OracleTarget => {
            let target = cfg.roles.target();
            let fit = refit_propensity(ds, &target, &opts.pacs.logistic())?;
            (target, ipw_ate(ds, &fit.p_hat)?.value)
        }
    };
    Ok(MethodOutcome {
        selected,
        ate,
        elapsed: start.elapsed(),
    })
}

/// Runs one replication: generates the dataset and applies every method.
pub fn run_replication(
    cfg: &ScenarioConfig,
    methods: &[Method],
    opts: &ExperimentOptions,
    rep: usize,
) -> Vec<Result<MethodOutcome>> {
    let seed = replication_seed(cfg.seed, rep);
    match generate(cfg, rep) {
        Ok(ds) => methods
            .iter()
            .map(|&m| run_method(m, &ds, cfg, opts, seed))
            .collect(),
        Err(e) => {
            let msg = e.to_string();
            methods
                .iter()
                .map(|_| Err(PacsError::InvalidData(format!("generation failed: {msg}"))))
                .collect()
        }
    }
}

/// Runs `cfg.m` paired replications of every method.
pub fn run_experiment(
    cfg: &ScenarioConfig,
    methods: &[Method],
    opts: &ExperimentOptions,
) -> Result<Vec<ReplicationReport>> {
    cfg.validate()?;
    opts.pacs.validate()?;
    if methods.is_empty() {
        return Err(PacsError::Config("no methods requested".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| PacsError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Vec<Result<MethodOutcome>>> = pool.install(|| {
        (0..cfg.m)
            .into_par_iter()
            .map(|rep| run_replication(cfg, methods, opts, rep))
            .collect()
    });

    let seeds: Vec<u64> = (0..cfg.m).map(|r| replication_seed(cfg.seed, r)).collect();
    let mut reports: Vec<ReplicationReport> = methods
        .iter()
        .map(|&method| ReplicationReport {
            method,
            m: cfg.m,
            p: cfg.p,
            n: cfg.n,
            selection_counts: vec![0; cfg.p],
            ate_estimates: Vec::new(),
            wall_clock_total: Duration::ZERO,
            per_replication_seeds: seeds.clone(),
            failures: Vec::new(),
        })
        .collect();
    for (rep, row) in outcomes.into_iter().enumerate() {
        for (report, outcome) in reports.iter_mut().zip(row) {
            match outcome {
                Ok(o) => {
                    for j in o.selected {
                        report.selection_counts[j] += 1;
                    }
                    report.ate_estimates.push(o.ate);
                    report.wall_clock_total += o.elapsed;
                }
                Err(e) => report.failures.push((rep, e.to_string())),
            }
        }
    }
    Ok(reports)
}
