//! The two-step selector: logistic propensity on all covariates, then an
//! inverse-probability-weighted adaptive lasso of the outcome in each arm.
//! A covariate is kept when both arms (or, with [`SelectionRule::Or`], either
//! arm) give it a nonzero coefficient. The propensity model is then refitted
//! on the kept covariates and plugged into the Hájek IPW estimator.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::data::{Arm, Dataset};
use crate::error::{PacsError, Result};
use crate::penalized::{
    adaptive_lasso_with, adaptive_weights, center_transform, cross_validate_with, weighted_ols,
    CvResult, LambdaGrid, LassoOptions, PenalizedFit, WlsFit,
};
use crate::propensity::{
    constant_propensity, fit_logistic, fit_logistic_design, LogisticOptions, PropensityFit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionRule {
    /// Nonzero in both arms.
    #[default]
    And,
    /// Nonzero in at least one arm.
    Or,
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionRule::And => "and",
            SelectionRule::Or => "or",
        })
    }
}

impl FromStr for SelectionRule {
    type Err = PacsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "and" => Ok(SelectionRule::And),
            "or" => Ok(SelectionRule::Or),
            other => Err(PacsError::Config(format!(
                "unknown rule `{other}` (expected and|or)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacsConfig {
    pub gamma_grid: Vec<f64>,
    pub lambda_grid_size: usize,
    pub lambda_min_ratio: f64,
    pub cv_folds: usize,
    pub rule: SelectionRule,
    pub intercept_in_propensity: bool,
    pub clip_epsilon: f64,
    /// Seed for the fold permutation; arms get distinct derived streams.
    pub cv_seed: u64,
    pub lasso: LassoOptions,
}

impl Default for PacsConfig {
    fn default() -> Self {
        Self {
            gamma_grid: vec![0.5, 1.0, 2.0],
            lambda_grid_size: 50,
            lambda_min_ratio: 1e-4,
            cv_folds: 5,
            rule: SelectionRule::And,
            intercept_in_propensity: false,
            clip_epsilon: 1e-6,
            cv_seed: 0,
            lasso: LassoOptions::default(),
        }
    }
}

impl PacsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 0.1) {
            return Err(PacsError::Config(format!(
                "clip_epsilon must lie in (0, 0.1), got {}",
                self.clip_epsilon
            )));
        }
        if self.gamma_grid.is_empty() || self.gamma_grid.iter().any(|g| !(*g > 0.0)) {
            return Err(PacsError::Config(
                "gamma grid must be non-empty and positive".into(),
            ));
        }
        if self.lambda_grid_size == 0 {
            return Err(PacsError::Config("lambda grid size must be positive".into()));
        }
        if self.cv_folds < 2 {
            return Err(PacsError::Config("need at least 2 folds".into()));
        }
        Ok(())
    }

    pub fn logistic(&self) -> LogisticOptions {
        LogisticOptions {
            include_intercept: self.intercept_in_propensity,
            clip_epsilon: self.clip_epsilon,
            ..LogisticOptions::default()
        }
    }

    fn lambda_grid(&self) -> LambdaGrid {
        LambdaGrid::Auto {
            size: self.lambda_grid_size,
            min_ratio: self.lambda_min_ratio,
        }
    }
}

/// Wall-clock time per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub propensity: Duration,
    pub treatment_arm: Duration,
    pub control_arm: Duration,
    pub refit: Duration,
    pub ate: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.propensity + self.treatment_arm + self.control_arm + self.refit + self.ate
    }
}

/// Hájek IPW estimate together with its weighted-mean components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteEstimate {
    pub value: f64,
    pub treated_mean: f64,
    pub control_mean: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub sum_weights_treated: f64,
    pub sum_weights_control: f64,
}

/// Step-2 output of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmFit {
    pub wls: WlsFit,
    pub cv: CvResult,
    pub fit: PenalizedFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacsResult {
    pub rule: SelectionRule,
    pub treatment: ArmFit,
    pub control: ArmFit,
    pub propensity_full: PropensityFit,
    /// 0-based covariate indices, ascending.
    pub selected: Vec<usize>,
    pub propensity_selected: PropensityFit,
    /// Set when nothing was selected and the intercept-only propensity was used.
    pub empty_selection: bool,
    pub ate: AteEstimate,
    pub timing: StageTimings,
}

impl PacsResult {
    pub fn fit_t(&self) -> &PenalizedFit {
        &self.treatment.fit
    }

    pub fn fit_c(&self) -> &PenalizedFit {
        &self.control.fit
    }

    /// Selection under the other rule from the same arm fits.
    pub fn selected_under(&self, rule: SelectionRule) -> Vec<usize> {
        select(&self.treatment.fit.beta_hat, &self.control.fit.beta_hat, rule)
            .expect("arm fits have equal length")
    }
}

/// Applies the selection rule to two coefficient vectors (exact-zero test).
pub fn select(beta_t: &[f64], beta_c: &[f64], rule: SelectionRule) -> Result<Vec<usize>> {
    if beta_t.len() != beta_c.len() {
        return Err(PacsError::DimensionMismatch {
            expected: beta_t.len(),
            got: beta_c.len(),
        });
    }
    Ok((0..beta_t.len())
        .filter(|&j| {
            let (t, c) = (beta_t[j] != 0.0, beta_c[j] != 0.0);
            match rule {
                SelectionRule::And => t && c,
                SelectionRule::Or => t || c,
            }
        })
        .collect())
}

/// Hájek inverse-probability-weighted difference of arm means.
pub fn ipw_ate(ds: &Dataset, p_hat: &[f64]) -> Result<AteEstimate> {
    if p_hat.len() != ds.n() {
        return Err(PacsError::DimensionMismatch {
            expected: ds.n(),
            got: p_hat.len(),
        });
    }
    if let Some(p) = p_hat.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(PacsError::InvalidData(format!(
            "propensities must lie in (0, 1), got {p}"
        )));
    }
    let (mut sw_t, mut swy_t, mut sw_c, mut swy_c) = (0.0, 0.0, 0.0, 0.0);
    let (mut n_t, mut n_c) = (0, 0);
    for ((&y, &d), &p) in ds.y().iter().zip(ds.d()).zip(p_hat) {
        if d {
            sw_t += 1.0 / p;
            swy_t += y / p;
            n_t += 1;
        } else {
            sw_c += 1.0 / (1.0 - p);
            swy_c += y / (1.0 - p);
            n_c += 1;
        }
    }
    if n_t == 0 {
        return Err(PacsError::EmptyArm("treatment"));
    }
    if n_c == 0 {
        return Err(PacsError::EmptyArm("control"));
    }
    let treated_mean = swy_t / sw_t;
    let control_mean = swy_c / sw_c;
    Ok(AteEstimate {
        value: treated_mean - control_mean,
        treated_mean,
        control_mean,
        n_treated: n_t,
        n_control: n_c,
        sum_weights_treated: sw_t,
        sum_weights_control: sw_c,
    })
}

/// Propensity refit on a covariate subset; intercept-only when empty.
pub fn refit_propensity(
    ds: &Dataset,
    columns: &[usize],
    opts: &LogisticOptions,
) -> Result<PropensityFit> {
    if columns.is_empty() {
        return Ok(constant_propensity(&ds.d_f64(), opts.clip_epsilon));
    }
    fit_logistic_design(&ds.columns(columns), &ds.d_f64(), opts)
}

fn arm_seed(seed: u64, arm: Arm) -> u64 {
    let salt = match arm {
        Arm::Treatment => 0x9E37_79B9_7F4A_7C15,
        Arm::Control => 0xD1B5_4A32_D192_ED03,
    };
    crate::sim::splitmix64(seed ^ salt)
}

fn fit_arm(ds: &Dataset, arm: Arm, p_hat: &[f64], cfg: &PacsConfig) -> Result<ArmFit> {
    let view = ds.view(arm);
    let weights = view.ipw_weights(p_hat);
    let wls = weighted_ols(&view, &weights)?;
    let ts = center_transform(&view, p_hat)?;
    let cv = cross_validate_with(
        &ts,
        &wls.beta_tilde,
        &cfg.lambda_grid(),
        &cfg.gamma_grid,
        cfg.cv_folds,
        arm_seed(cfg.cv_seed, arm),
        &cfg.lasso,
    )?;
    let omega = adaptive_weights(&wls.beta_tilde, cv.gamma_star);
    let mut fit = adaptive_lasso_with(&ts, &omega, cv.lambda_star, &cfg.lasso, None)?;
    fit.gamma = Some(cv.gamma_star);
    Ok(ArmFit { wls, cv, fit })
}

/// Runs the full selection and estimation pipeline.
pub fn pacs_fit(ds: &Dataset, cfg: &PacsConfig) -> Result<PacsResult> {
    cfg.validate()?;
    let p = ds.p();
    for arm in [Arm::Treatment, Arm::Control] {
        let size = ds.view(arm).len();
        if size <= p + 1 {
            return Err(PacsError::ArmTooSmall {
                arm: arm.label(),
                size,
                needed: p + 1,
            });
        }
    }
    let logistic = cfg.logistic();
    let mut timing = StageTimings::default();

    let t0 = Instant::now();
    let propensity_full = fit_logistic(ds, &logistic)?;
    timing.propensity = t0.elapsed();

    let t0 = Instant::now();
    let treatment = fit_arm(ds, Arm::Treatment, &propensity_full.p_hat, cfg)?;
    timing.treatment_arm = t0.elapsed();
    let t0 = Instant::now();
    let control = fit_arm(ds, Arm::Control, &propensity_full.p_hat, cfg)?;
    timing.control_arm = t0.elapsed();

    let selected = select(&treatment.fit.beta_hat, &control.fit.beta_hat, cfg.rule)?;
    let t0 = Instant::now();
    let propensity_selected = refit_propensity(ds, &selected, &logistic)?;
    timing.refit = t0.elapsed();

    let t0 = Instant::now();
    let ate = ipw_ate(ds, &propensity_selected.p_hat)?;
    timing.ate = t0.elapsed();

    Ok(PacsResult {
        rule: cfg.rule,
        treatment,
        control,
        propensity_full,
        empty_selection: selected.is_empty(),
        selected,
        propensity_selected,
        ate,
        timing,
    })
}
