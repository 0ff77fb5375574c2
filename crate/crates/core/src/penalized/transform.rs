use nalgebra::DMatrix;

use crate::data::GroupView;
use crate::error::{PacsError, Result};

/// One arm recentred at its inverse-probability-weighted means and rescaled
/// row-wise by `sqrt(w_i)`, so the weighted regression with intercept becomes
/// an ordinary regression without one.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedSample {
    pub y_tilde: Vec<f64>,
    pub x_tilde: DMatrix<f64>,
    pub ybar_w: f64,
    pub xbar_w: Vec<f64>,
    /// Per-unit weights (`1/p` treated, `1/(1-p)` control).
    pub weights: Vec<f64>,
}

impl TransformedSample {
    pub fn len(&self) -> usize {
        self.y_tilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_tilde.is_empty()
    }

    pub fn p(&self) -> usize {
        self.x_tilde.ncols()
    }

    /// Centred outcome on the original scale, `Y_i - ybar_w`.
    pub fn centered_y(&self, i: usize) -> f64 {
        self.y_tilde[i] / self.weights[i].sqrt()
    }

    /// Centred covariate on the original scale, `X_ij - xbar_w_j`.
    pub fn centered_x(&self, i: usize, j: usize) -> f64 {
        self.x_tilde[(i, j)] / self.weights[i].sqrt()
    }

    /// Intercept implied by slopes `beta`: `ybar_w - xbar_w' beta`.
    pub fn intercept_for(&self, beta: &[f64]) -> f64 {
        self.ybar_w - self.xbar_w.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>()
    }
}

/// Weighted centring of an arbitrary sample.
pub fn center_weighted(y: &[f64], x: &DMatrix<f64>, weights: &[f64]) -> Result<TransformedSample> {
    let (n, p) = x.shape();
    if y.len() != n || weights.len() != n {
        return Err(PacsError::DimensionMismatch {
            expected: n,
            got: y.len().min(weights.len()),
        });
    }
    if n == 0 {
        return Err(PacsError::InvalidData("cannot centre an empty sample".into()));
    }
    let total: f64 = weights.iter().sum();
    let ybar_w = y.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total;
    let xbar_w: Vec<f64> = (0..p)
        .map(|j| x.column(j).iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total)
        .collect();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let y_tilde = (0..n).map(|i| (y[i] - ybar_w) * sqrt_w[i]).collect();
    let x_tilde = DMatrix::from_fn(n, p, |i, j| (x[(i, j)] - xbar_w[j]) * sqrt_w[i]);
    Ok(TransformedSample {
        y_tilde,
        x_tilde,
        ybar_w,
        xbar_w,
        weights: weights.to_vec(),
    })
}

/// Centres and reweights one arm with the fitted propensities `p_hat`
/// (indexed over the full dataset).
pub fn center_transform(view: &GroupView<'_>, p_hat: &[f64]) -> Result<TransformedSample> {
    if p_hat.len() != view.parent.n() {
        return Err(PacsError::DimensionMismatch {
            expected: view.parent.n(),
            got: p_hat.len(),
        });
    }
    if let Some(p) = p_hat.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(PacsError::InvalidData(format!(
            "propensities must lie in (0, 1), got {p}"
        )));
    }
    center_weighted(&view.y(), &view.x(), &view.ipw_weights(p_hat))
}
