//! Propensity-score adapted covariate selection.
//!
//! The pipeline fits a logistic propensity model, runs an inverse-probability
//! weighted adaptive lasso of the outcome separately in the treated and
//! control arms, keeps the covariates both arms agree on, and estimates the
//! average treatment effect with a Hájek IPW estimator on the kept set.
//!
//! [`sim`] reproduces the Monte-Carlo comparison against the
//! outcome-adaptive lasso.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod pacs;
pub mod penalized;
pub mod propensity;
pub mod sim;

pub use data::{load_csv, read_csv, split_groups, Arm, CovariateRoles, Dataset, GroupView, Role};
pub use error::{PacsError, Result};
pub use pacs::{
    ipw_ate, pacs_fit, refit_propensity, select, AteEstimate, ArmFit, PacsConfig, PacsResult,
    SelectionRule, StageTimings,
};
pub use penalized::{
    adaptive_lasso, center_transform, cross_validate, weighted_ols, LambdaGrid, LassoOptions,
    PenalizedFit, TransformedSample, WlsFit,
};
pub use propensity::{fit_logistic, predict_propensity, LogisticOptions, PropensityFit};
