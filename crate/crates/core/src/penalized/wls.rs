use nalgebra::{DMatrix, DVector};

use crate::data::GroupView;
use crate::error::{PacsError, Result};

/// Unpenalized inverse-probability-weighted fit of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsFit {
    pub eta_tilde: f64,
    pub beta_tilde: Vec<f64>,
    pub weights_used: Vec<f64>,
    /// `|Z'W(y - Z b)|_inf / max(1, |Z'W y|_inf)` at the solution.
    pub normal_residual: f64,
}

/// Relative tolerance below which a column is considered a linear
/// combination of the ones before it.
const RANK_TOL: f64 = 1e-10;

/// Weighted least squares of `y` on the columns of `z`. `labels` names each
/// column for rank-deficiency diagnostics.
pub(crate) fn solve_weighted_ls(
    z: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    labels: &[String],
) -> Result<(DVector<f64>, f64)> {
    let (n, k) = z.shape();
    debug_assert_eq!(labels.len(), k);
    let mut zw = z.clone();
    let mut yw = DVector::from_column_slice(y);
    for i in 0..n {
        let s = w[i].sqrt();
        zw.row_mut(i).scale_mut(s);
        yw[i] *= s;
    }

    // Modified Gram-Schmidt with the outcome carried along: yields R and
    // Q'y for the solve, and names any dependent columns.
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut r = DMatrix::zeros(k, k);
    let mut qty = DVector::zeros(k);
    let mut y_rest = yw.clone();
    let mut dependent = Vec::new();
    for j in 0..k {
        let mut v = zw.column(j).into_owned();
        let norm0 = v.norm();
        for (a, q) in basis.iter().enumerate() {
            let proj = q.dot(&v);
            r[(a, j)] = proj;
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= RANK_TOL * norm0 {
            dependent.push(labels[j].clone());
            continue;
        }
        let q = v / norm;
        r[(basis.len(), j)] = norm;
        qty[basis.len()] = q.dot(&y_rest);
        y_rest.axpy(-qty[basis.len()], &q, 1.0);
        basis.push(q);
    }
    if !dependent.is_empty() {
        return Err(PacsError::RankDeficient { columns: dependent });
    }
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| PacsError::RankDeficient {
            columns: labels.to_vec(),
        })?;

    let rhs = zw.transpose() * &yw;
    let resid = zw.transpose() * (&yw - &zw * &coef);
    let rel = resid.amax() / rhs.amax().max(1.0);
    Ok((coef, rel))
}

/// Minimizes `sum_i w_i (Y_i - eta - beta'X_i)^2` over the units of `view`.
pub fn weighted_ols(view: &GroupView<'_>, weights: &[f64]) -> Result<WlsFit> {
    let p = view.parent.p();
    if weights.len() != view.len() {
        return Err(PacsError::DimensionMismatch {
            expected: view.len(),
            got: weights.len(),
        });
    }
    if view.len() <= p + 1 {
        return Err(PacsError::ArmTooSmall {
            arm: view.arm.label(),
            size: view.len(),
            needed: p + 1,
        });
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(PacsError::InvalidData(format!(
            "weights must be finite and positive, got {w}"
        )));
    }
    let z = view.x().insert_column(0, 1.0);
    let mut labels = vec!["intercept".to_string()];
    labels.extend(view.parent.names().iter().cloned());
    let (coef, normal_residual) = solve_weighted_ls(&z, &view.y(), weights, &labels)?;
    Ok(WlsFit {
        eta_tilde: coef[0],
        beta_tilde: coef.iter().skip(1).copied().collect(),
        weights_used: weights.to_vec(),
        normal_residual,
    })
}
