//! K-fold cross-validation over `(lambda, gamma)`.
//!
//! Folds come from a seeded permutation of the arm's rows. Each training fold
//! is recentred at its own weighted means before fitting, and held-out rows
//! are scored by `w_i (Y_i - eta - beta'X_i)^2`, which is the squared error
//! on the transformed scale.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use nalgebra::{DMatrix, DVector};

use super::lasso::{adaptive_weights, coordinate_descent, Gram, LassoOptions, SupportFactor};
use super::transform::TransformedSample;
use crate::error::{PacsError, Result};

/// Candidate penalties.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    /// Fixed values, used for every gamma.
    Explicit(Vec<f64>),
    /// `size` log-spaced values from `lambda_max` down to
    /// `min_ratio * lambda_max`, recomputed for each gamma.
    Auto { size: usize, min_ratio: f64 },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto {
            size: 50,
            min_ratio: 1e-4,
        }
    }
}

/// Log-spaced decreasing grid anchored at `lambda_max`.
pub fn log_grid(lambda_max: f64, size: usize, min_ratio: f64) -> Vec<f64> {
    if lambda_max <= 0.0 || size == 0 {
        return vec![0.0];
    }
    if size == 1 {
        return vec![lambda_max];
    }
    let lo = min_ratio.ln();
    (0..size)
        .map(|k| lambda_max * (lo * k as f64 / (size - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCell {
    pub gamma: f64,
    pub lambda: f64,
    /// Position in this gamma's lambda grid, largest lambda first.
    pub lambda_index: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda_star: f64,
    pub gamma_star: f64,
    /// Grid size used for `gamma_star`.
    pub grid_len: usize,
    pub table: Vec<CvCell>,
}

impl CvResult {
    pub fn best(&self) -> &CvCell {
        self.table
            .iter()
            .find(|c| c.lambda == self.lambda_star && c.gamma == self.gamma_star)
            .expect("best cell is in the table")
    }
}

/// Deterministic balanced fold labels for `m` rows.
pub fn fold_assignment(m: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![0; m];
    for (pos, &row) in perm.iter().enumerate() {
        label[row] = pos % folds;
    }
    label
}

/// Training-fold statistics, recentred at the training rows' own weighted
/// means. Coordinates are the arm-centred ones (`X_i - xbar_w`).
struct Fold {
    gram: Gram,
    ybar: f64,
    xbar: Vec<f64>,
    /// Held-out rows on the transformed scale.
    x_test: DMatrix<f64>,
    y_test: DVector<f64>,
    sqrt_w_test: DVector<f64>,
}

/// Builds a training fold by removing the test rows from the full arm's
/// cross-products and recentring, which avoids materializing the training
/// design.
fn training_fold(ts: &TransformedSample, full: &Gram, sums: &(f64, f64, Vec<f64>), test: Vec<usize>) -> Fold {
    let p = ts.p();
    let xt = DMatrix::from_fn(test.len(), p, |r, j| ts.x_tilde[(test[r], j)]);
    let yt = DVector::from_fn(test.len(), |r, _| ts.y_tilde[test[r]]);
    let (w_all, wy_all, wx_all) = sums;
    let mut w = *w_all;
    let mut wy = *wy_all;
    let mut wx = wx_all.clone();
    for &i in &test {
        let s = ts.weights[i].sqrt();
        w -= ts.weights[i];
        wy -= s * ts.y_tilde[i];
        for (j, v) in wx.iter_mut().enumerate() {
            *v -= s * ts.x_tilde[(i, j)];
        }
    }
    let ybar = wy / w;
    let xbar: Vec<f64> = wx.iter().map(|v| v / w).collect();
    let mx = DVector::from_column_slice(&xbar);
    let gram = Gram {
        gram: &full.gram - xt.transpose() * &xt - (&mx * mx.transpose()) * w,
        xty: &full.xty - xt.tr_mul(&yt) - &mx * (w * ybar),
        yty: full.yty - yt.norm_squared() - w * ybar * ybar,
    };
    Fold {
        gram,
        ybar,
        xbar,
        sqrt_w_test: DVector::from_fn(test.len(), |r, _| ts.weights[test[r]].sqrt()),
        x_test: xt,
        y_test: yt,
    }
}

/// `sum w_i (Y_i - eta - beta'X_i)^2` over held-out rows, computed as
/// `|y_tilde - sqrt(w) eta - X_tilde beta|^2`.
fn held_out_sse(fold: &Fold, beta: &[f64]) -> f64 {
    let eta = fold.ybar - fold.xbar.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>();
    let mut r = fold.y_test.clone();
    r.axpy(-eta, &fold.sqrt_w_test, 1.0);
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            r.axpy(-b, &fold.x_test.column(j), 1.0);
        }
    }
    r.norm_squared()
}

/// Cross-validates the adaptive lasso with pilot coefficients `beta_tilde`.
///
/// Returns the pair minimizing mean held-out squared error; ties go to the
/// smallest lambda, then the smallest gamma.
pub fn cross_validate(
    ts: &TransformedSample,
    beta_tilde: &[f64],
    lambda_grid: &LambdaGrid,
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    cross_validate_with(
        ts,
        beta_tilde,
        lambda_grid,
        gamma_grid,
        folds,
        seed,
        &LassoOptions::default(),
    )
}

pub fn cross_validate_with(
    ts: &TransformedSample,
    beta_tilde: &[f64],
    lambda_grid: &LambdaGrid,
    gamma_grid: &[f64],
    folds: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<CvResult> {
    let m = ts.len();
    let p = ts.p();
    if folds < 2 {
        return Err(PacsError::Config(format!("need at least 2 folds, got {folds}")));
    }
    if gamma_grid.is_empty() {
        return Err(PacsError::Config("gamma grid is empty".into()));
    }
    if let Some(g) = gamma_grid.iter().find(|g| !(**g > 0.0)) {
        return Err(PacsError::Config(format!("gamma must be positive, got {g}")));
    }
    match lambda_grid {
        LambdaGrid::Explicit(v) if v.is_empty() => {
            return Err(PacsError::Config("lambda grid is empty".into()))
        }
        LambdaGrid::Explicit(v) if v.iter().any(|l| !(*l >= 0.0)) => {
            return Err(PacsError::Config("lambda grid has negative values".into()))
        }
        LambdaGrid::Auto { size: 0, .. } => {
            return Err(PacsError::Config("lambda grid is empty".into()))
        }
        _ => {}
    }
    if beta_tilde.len() != p {
        return Err(PacsError::DimensionMismatch {
            expected: p,
            got: beta_tilde.len(),
        });
    }
    if m < folds {
        return Err(PacsError::Config(format!(
            "arm has {m} rows, fewer than {folds} folds"
        )));
    }

    let labels = fold_assignment(m, folds, seed);
    let full = Gram::new(&ts.x_tilde, &ts.y_tilde);
    let sums = {
        let sw: Vec<f64> = ts.weights.iter().map(|w| w.sqrt()).collect();
        let wy = sw.iter().zip(&ts.y_tilde).map(|(s, y)| s * y).sum::<f64>();
        let wx = (0..p)
            .map(|j| sw.iter().zip(ts.x_tilde.column(j).iter()).map(|(s, x)| s * x).sum())
            .collect();
        (ts.weights.iter().sum::<f64>(), wy, wx)
    };
    let mut fold_data = Vec::with_capacity(folds);
    for k in 0..folds {
        let test: Vec<usize> = (0..m).filter(|&i| labels[i] == k).collect();
        if test.is_empty() || test.len() == m {
            return Err(PacsError::EmptyFold { fold: k });
        }
        fold_data.push(training_fold(ts, &full, &sums, test));
    }

    let grids: Vec<(f64, Vec<f64>, Vec<f64>)> = gamma_grid
        .iter()
        .map(|&gamma| {
            let omega = adaptive_weights(beta_tilde, gamma);
            let mut lambdas = match lambda_grid {
                LambdaGrid::Explicit(v) => v.clone(),
                LambdaGrid::Auto { size, min_ratio } => {
                    log_grid(full.lambda_max(&omega), *size, *min_ratio)
                }
            };
            // Warm starts run from the sparsest end.
            lambdas.sort_by(|a, b| b.total_cmp(a));
            (gamma, omega, lambdas)
        })
        .collect();

    // sse[fold][gamma][lambda]
    let sse: Vec<Result<Vec<Vec<f64>>>> = fold_data
        .par_iter()
        .map(|fold| {
            let g = &fold.gram;
            let mut factor = SupportFactor::new(p);
            grids
                .iter()
                .map(|(_, omega, lambdas)| {
                    let mut beta = vec![0.0; p];
                    lambdas
                        .iter()
                        .map(|&lambda| {
                            let cd = coordinate_descent(g, omega, lambda, &beta, opts, &mut factor);
                            if !cd.converged {
                                return Err(PacsError::NotConverged {
                                    sweeps: cd.sweeps,
                                    last_change: cd.last_change,
                                    kkt: f64::NAN,
                                });
                            }
                            beta = cd.beta;
                            Ok(held_out_sse(fold, &beta))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let sse: Vec<Vec<Vec<f64>>> = sse.into_iter().collect::<Result<_>>()?;

    let mut table = Vec::new();
    for (gi, (gamma, _, lambdas)) in grids.iter().enumerate() {
        for (li, &lambda) in lambdas.iter().enumerate() {
            let total: f64 = sse.iter().map(|f| f[gi][li]).sum();
            table.push(CvCell {
                gamma: *gamma,
                lambda,
                lambda_index: li,
                mse: total / m as f64,
            });
        }
    }
    let best = table
        .iter()
        .min_by(|a, b| {
            a.mse
                .total_cmp(&b.mse)
                .then(a.lambda.total_cmp(&b.lambda))
                .then(a.gamma.total_cmp(&b.gamma))
        })
        .expect("non-empty grid");
    let grid_len = grids
        .iter()
        .find(|(g, _, _)| *g == best.gamma)
        .map(|(_, _, l)| l.len())
        .unwrap_or(0);
    Ok(CvResult {
        lambda_star: best.lambda,
        gamma_star: best.gamma,
        grid_len,
        table,
    })
}
