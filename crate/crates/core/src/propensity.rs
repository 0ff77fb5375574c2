//! Logistic propensity model fitted by maximum likelihood.
//!
//! The solver is a damped Newton iteration (IRLS) with step halving, so the
//! summed Bernoulli log-likelihood does not decrease between accepted
//! iterates by more than its own rounding error.
//! Fitted probabilities are clipped to `[eps, 1 - eps]` to keep inverse
//! probability weights finite.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{PacsError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub include_intercept: bool,
    pub clip_epsilon: f64,
    /// Convergence threshold on the max-norm of the score.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Coefficients beyond this max-norm are treated as separation.
    pub separation_bound: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            include_intercept: false,
            clip_epsilon: 1e-6,
            tolerance: 1e-8,
            max_iter: 100,
            separation_bound: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    /// Intercept first when `include_intercept` is set, then one entry per
    /// covariate column.
    pub alpha_hat: Vec<f64>,
    pub include_intercept: bool,
    pub p_hat: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Max-norm of the score at `alpha_hat`.
    pub score_norm: f64,
    pub clip_epsilon: f64,
    /// Log-likelihood after each accepted iterate, starting at `alpha = 0`.
    pub trace: Vec<f64>,
}

impl PropensityFit {
    /// Number of covariates (excluding the intercept).
    pub fn dim(&self) -> usize {
        self.alpha_hat.len() - usize::from(self.include_intercept)
    }

    /// Covariate coefficients without the intercept.
    pub fn slopes(&self) -> &[f64] {
        &self.alpha_hat[usize::from(self.include_intercept)..]
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub(crate) fn clip(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Relative rounding allowance per summed term of the log-likelihood.
const LL_ROUNDING: f64 = 1e-15;

const STEP_TOLERANCE: f64 = 1e-6;

fn design(x: &DMatrix<f64>, include_intercept: bool) -> DMatrix<f64> {
    if include_intercept {
        x.clone().insert_column(0, 1.0)
    } else {
        x.clone()
    }
}

/// Summed Bernoulli log-likelihood `sum_i d_i z_i'a - log(1 + exp(z_i'a))`.
pub fn log_likelihood(z: &DMatrix<f64>, d: &[f64], alpha: &[f64]) -> f64 {
    let eta = z * DVector::from_column_slice(alpha);
    eta.iter()
        .zip(d)
        .map(|(&e, &di)| di * e - softplus(e))
        .sum()
}

/// Score `sum_i (d_i - sigma(z_i'a)) z_i`.
pub fn score(z: &DMatrix<f64>, d: &[f64], alpha: &[f64]) -> Vec<f64> {
    let eta = z * DVector::from_column_slice(alpha);
    let resid = DVector::from_iterator(
        d.len(),
        eta.iter().zip(d).map(|(&e, &di)| di - sigmoid(e)),
    );
    (z.transpose() * resid).iter().copied().collect()
}

/// Fits the propensity model on all covariates of `ds`.
pub fn fit_logistic(ds: &Dataset, opts: &LogisticOptions) -> Result<PropensityFit> {
    fit_logistic_design(ds.x(), &ds.d_f64(), opts)
}

/// Fits the propensity model on an explicit covariate matrix, which may have
/// zero columns when an intercept is requested.
pub fn fit_logistic_design(
    x: &DMatrix<f64>,
    d: &[f64],
    opts: &LogisticOptions,
) -> Result<PropensityFit> {
    let n = x.nrows();
    if d.len() != n {
        return Err(PacsError::DimensionMismatch {
            expected: n,
            got: d.len(),
        });
    }
    let z = design(x, opts.include_intercept);
    let k = z.ncols();
    if k == 0 {
        return Err(PacsError::InvalidData(
            "propensity model has no covariates and no intercept".into(),
        ));
    }
    if n <= k {
        return Err(PacsError::InvalidData(format!(
            "propensity model needs n > p (n = {n}, p = {k})"
        )));
    }

    let mut alpha = DVector::<f64>::zeros(k);
    let mut ll = log_likelihood(&z, d, alpha.as_slice());
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut score_norm: f64;

    loop {
        let eta = &z * &alpha;
        let prob: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_iterator(n, prob.iter().zip(d).map(|(&pi, &di)| di - pi));
        let grad = z.transpose() * resid;
        score_norm = grad.amax();
        if iterations >= opts.max_iter && score_norm > opts.tolerance {
            break;
        }

        let mut weighted = z.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= prob[i] * (1.0 - prob[i]);
        }
        let hess = z.transpose() * weighted;
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                let ridge = 1e-8 * hess.diagonal().amax().max(1e-12);
                let damped = hess + DMatrix::identity(k, k) * ridge;
                match damped.cholesky() {
                    Some(ch) => ch.solve(&grad),
                    None => break,
                }
            }
        };
        // Along a separating direction the score vanishes while Newton steps
        // stay O(1), so a small score alone is not convergence.
        if score_norm <= opts.tolerance && step.amax() <= STEP_TOLERANCE * alpha.amax().max(1.0) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        // Near the optimum the gain of a full step is below the rounding
        // error of the summed likelihood, so allow that much slack for it.
        let slack = LL_ROUNDING * (n as f64) * ll.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &alpha + &step * t;
            let cand_ll = log_likelihood(&z, d, cand.as_slice());
            if cand_ll >= ll || (t == 1.0 && cand_ll >= ll - slack) {
                alpha = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        trace.push(ll);
        let norm = alpha.amax();
        if norm > opts.separation_bound {
            return Err(PacsError::Separation { norm, iterations });
        }
    }

    let eta = &z * &alpha;
    let p_hat = eta
        .iter()
        .map(|&e| clip(sigmoid(e), opts.clip_epsilon))
        .collect();
    Ok(PropensityFit {
        alpha_hat: alpha.iter().copied().collect(),
        include_intercept: opts.include_intercept,
        p_hat,
        converged,
        iterations,
        log_likelihood: ll,
        score_norm,
        clip_epsilon: opts.clip_epsilon,
        trace,
    })
}

/// Intercept-only propensity: constant fitted probability equal to the
/// treated fraction.
pub fn constant_propensity(d: &[f64], clip_epsilon: f64) -> PropensityFit {
    let n = d.len();
    let frac = d.iter().sum::<f64>() / n as f64;
    let p = clip(frac, clip_epsilon);
    let intercept = (p / (1.0 - p)).ln();
    let z = DMatrix::from_element(n, 1, 1.0);
    PropensityFit {
        alpha_hat: vec![intercept],
        include_intercept: true,
        p_hat: vec![p; n],
        converged: true,
        iterations: 0,
        log_likelihood: log_likelihood(&z, d, &[intercept]),
        score_norm: 0.0,
        clip_epsilon,
        trace: Vec::new(),
    }
}

/// Clipped fitted probability for one unit's covariate row.
pub fn predict_propensity(fit: &PropensityFit, x_row: &[f64]) -> Result<f64> {
    if x_row.len() != fit.dim() {
        return Err(PacsError::DimensionMismatch {
            expected: fit.dim(),
            got: x_row.len(),
        });
    }
    let (offset, slopes) = if fit.include_intercept {
        (fit.alpha_hat[0], &fit.alpha_hat[1..])
    } else {
        (0.0, &fit.alpha_hat[..])
    };
    let eta = offset + slopes.iter().zip(x_row).map(|(a, x)| a * x).sum::<f64>();
    Ok(clip(sigmoid(eta), fit.clip_epsilon))
}
