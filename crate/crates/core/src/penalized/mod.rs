//! Inverse-probability-weighted least squares and the adaptive lasso that
//! sits on top of it.

pub mod cv;
pub mod lasso;
pub mod transform;
pub mod wls;

pub use cv::{cross_validate, cross_validate_with, fold_assignment, log_grid, CvCell, CvResult, LambdaGrid};
pub use lasso::{
    adaptive_lasso, adaptive_lasso_with, adaptive_weights, lambda_max, soft_threshold,
    LassoOptions, PenalizedFit, PIN_THRESHOLD,
};
pub use transform::{center_transform, center_weighted, TransformedSample};
pub use wls::{weighted_ols, WlsFit};
