//! Adaptive lasso by cyclic coordinate descent with covariance updates.
//!
//! The objective is the raw sum of squares
//!
//! ```text
//!     |y - X b|^2 + lambda * sum_j omega_j |b_j|
//! ```
//!
//! with no `1/(2n)` factor, so `lambda` values scale with the sample size.
//! Coordinates with `omega_j = +inf` are pinned at zero. The solver keeps
//! `c = X'y - X'X b` current, which makes a coordinate visit `O(1)` unless
//! the coefficient moves.

use nalgebra::{DMatrix, DVector};

use super::transform::TransformedSample;
use crate::error::{PacsError, Result};

/// `|beta_tilde_j|` below this pins the coordinate at zero.
pub const PIN_THRESHOLD: f64 = 1e-10;

const KKT_TARGET: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Stop when the largest coefficient change in a full sweep is at most this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Solve on unit mean-square columns and map coefficients back.
    pub standardize: bool,
    /// Record the objective after every sweep.
    pub record_trace: bool,
    /// Once the sign pattern has held for a few sweeps, jump to the exact
    /// minimizer on that support when it passes the KKT check.
    pub active_set_solve: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_sweeps: 100_000,
            standardize: false,
            record_trace: false,
            active_set_solve: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedFit {
    pub eta_hat: f64,
    pub beta_hat: Vec<f64>,
    pub lambda: f64,
    /// Exponent that produced `omega`, when known.
    pub gamma: Option<f64>,
    pub omega: Vec<f64>,
    pub active_set: Vec<usize>,
    pub objective_value: f64,
    /// Relative KKT violation; see [`kkt_violation`].
    pub kkt_violation: f64,
    pub sweeps: usize,
    pub objective_trace: Vec<f64>,
}

/// Soft-thresholding `sign(z) max(|z| - t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `omega_j = |beta_tilde_j|^-gamma`, with `+inf` for pinned coordinates.
pub fn adaptive_weights(beta_tilde: &[f64], gamma: f64) -> Vec<f64> {
    beta_tilde
        .iter()
        .map(|b| {
            let a = b.abs();
            if a < PIN_THRESHOLD {
                f64::INFINITY
            } else {
                a.powf(-gamma)
            }
        })
        .collect()
}

/// Sufficient statistics of a least-squares problem.
#[derive(Debug, Clone)]
pub(crate) struct Gram {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
}

impl Gram {
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Self {
        let yv = DVector::from_column_slice(y);
        Self {
            gram: x.transpose() * x,
            xty: x.tr_mul(&yv),
            yty: yv.norm_squared(),
        }
    }

    pub fn p(&self) -> usize {
        self.xty.len()
    }

    /// Smallest `lambda` whose solution is identically zero.
    pub fn lambda_max(&self, omega: &[f64]) -> f64 {
        self.xty
            .iter()
            .zip(omega)
            .filter(|(_, w)| w.is_finite())
            .map(|(c, w)| 2.0 * c.abs() / w)
            .fold(0.0, f64::max)
    }

    pub fn objective(&self, beta: &[f64], omega: &[f64], lambda: f64) -> f64 {
        let b = DVector::from_column_slice(beta);
        let quad = self.yty - 2.0 * self.xty.dot(&b) + b.dot(&(&self.gram * &b));
        quad + lambda * penalty(beta, omega)
    }
}

fn penalty(beta: &[f64], omega: &[f64]) -> f64 {
    beta.iter()
        .zip(omega)
        .filter(|(b, _)| **b != 0.0)
        .map(|(b, w)| w * b.abs())
        .sum()
}

/// Largest relative violation of the lasso stationarity conditions
/// `2 x_j'r = lambda omega_j sign(b_j)` (active) and `|2 x_j'r| <= lambda omega_j`
/// (inactive), scaled by `max(1, |2X'y|_inf)`. Pinned coordinates are skipped.
pub(crate) fn kkt_violation(g: &Gram, beta: &[f64], omega: &[f64], lambda: f64) -> f64 {
    let b = DVector::from_column_slice(beta);
    let corr = (&g.xty - &g.gram * &b) * 2.0;
    let scale = (g.xty.amax() * 2.0).max(1.0);
    let mut worst: f64 = 0.0;
    for j in 0..g.p() {
        if !omega[j].is_finite() {
            continue;
        }
        let bound = lambda * omega[j];
        let v = if beta[j] != 0.0 {
            (corr[j] - bound * beta[j].signum()).abs()
        } else {
            (corr[j].abs() - bound).max(0.0)
        };
        worst = worst.max(v);
    }
    worst / scale
}

pub(crate) struct CdOutcome {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    pub last_change: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

const NOT_IN_FACTOR: usize = usize::MAX;

/// Cholesky factor of `G_AA` for a support `A` that grows one column at a
/// time. Along a decreasing-lambda path the support mostly gains
/// coordinates, so consecutive exact solves reuse the factor and each new
/// column costs `O(|A|^2)` rather than a full refactorization.
pub(crate) struct SupportFactor {
    order: Vec<usize>,
    pos: Vec<usize>,
    /// Row-major lower triangle, row stride `stride`.
    l: Vec<f64>,
    stride: usize,
}

/// Dot product with four independent accumulators so it vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl SupportFactor {
    pub fn new(p: usize) -> Self {
        Self {
            order: Vec::with_capacity(p),
            pos: vec![NOT_IN_FACTOR; p],
            l: vec![0.0; p * p],
            stride: p,
        }
    }

    fn row(&self, a: usize, len: usize) -> &[f64] {
        &self.l[a * self.stride..a * self.stride + len]
    }

    fn truncate(&mut self, len: usize) {
        for &j in &self.order[len..] {
            self.pos[j] = NOT_IN_FACTOR;
        }
        self.order.truncate(len);
    }

    fn append(&mut self, g: &Gram, j: usize) -> bool {
        let k = self.order.len();
        let s = self.stride;
        let mut dsq = g.gram[(j, j)];
        for a in 0..k {
            let v = (g.gram[(self.order[a], j)] - dot(self.row(a, a), self.row(k, a)))
                / self.l[a * s + a];
            self.l[k * s + a] = v;
            dsq -= v * v;
        }
        if !(dsq > 1e-12 * g.gram[(j, j)]) {
            return false;
        }
        self.l[k * s + k] = dsq.sqrt();
        self.pos[j] = k;
        self.order.push(j);
        true
    }

    /// Makes the factor cover exactly `support`, keeping the longest prefix
    /// already factored. Returns false if `G_AA` is numerically singular.
    fn cover(&mut self, g: &Gram, support: &[usize], in_support: &[bool]) -> bool {
        let keep = self.order.iter().take_while(|&&j| in_support[j]).count();
        self.truncate(keep);
        for &j in support {
            if self.pos[j] == NOT_IN_FACTOR && !self.append(g, j) {
                self.truncate(0);
                return false;
            }
        }
        true
    }

    /// Solves `G_AA b = rhs`, with `rhs` and `b` in factor order.
    fn solve(&self, rhs: &mut [f64]) {
        let k = self.order.len();
        let s = self.stride;
        for a in 0..k {
            rhs[a] = (rhs[a] - dot(self.row(a, a), &rhs[..a])) / self.l[a * s + a];
        }
        for a in (0..k).rev() {
            rhs[a] /= self.l[a * s + a];
            let v = rhs[a];
            for (r, l) in rhs[..a].iter_mut().zip(self.row(a, a)) {
                *r -= l * v;
            }
        }
    }
}

/// Coordinate descent on Gram statistics, starting from `beta0`.
pub(crate) fn coordinate_descent(
    g: &Gram,
    omega: &[f64],
    lambda: f64,
    beta0: &[f64],
    opts: &LassoOptions,
    factor: &mut SupportFactor,
) -> CdOutcome {
    let p = g.p();
    let mut beta: Vec<f64> = beta0
        .iter()
        .zip(omega)
        .map(|(b, w)| if w.is_finite() { *b } else { 0.0 })
        .collect();
    let mut pattern = signs(&beta);
    let mut trace = Vec::new();
    // A warm start usually carries the right sign pattern already.
    let mut exact_start = None;
    if opts.active_set_solve {
        exact_start = solve_on_support(g, omega, lambda, &pattern, factor);
    }
    let mut c = match exact_start {
        Some(exact) => {
            beta = exact.beta;
            if opts.record_trace {
                trace.push(g.objective(&beta, omega, lambda));
            }
            if exact.pending <= opts.tolerance {
                return CdOutcome {
                    beta,
                    sweeps: 0,
                    last_change: 0.0,
                    converged: true,
                    trace,
                };
            }
            exact.corr
        }
        None => {
            if opts.record_trace {
                trace.push(g.objective(&beta, omega, lambda));
            }
            correlations(g, &beta)
        }
    };
    let mut sweeps = 0;
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    let mut stable = 0;
    let mut next_attempt = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let gjj = g.gram[(j, j)];
            if !omega[j].is_finite() || gjj <= 0.0 {
                continue;
            }
            let old = beta[j];
            let z = c[j] + gjj * old;
            let new = soft_threshold(z, 0.5 * lambda * omega[j]) / gjj;
            if new != old {
                let delta = new - old;
                c.axpy(-delta, &g.gram.column(j), 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if opts.record_trace {
            trace.push(g.objective(&beta, omega, lambda));
        }
        last_change = max_change;
        if max_change <= opts.tolerance {
            converged = true;
            break;
        }
        if !opts.active_set_solve {
            continue;
        }
        let current = signs(&beta);
        if current == pattern {
            stable += 1;
        } else {
            stable = 0;
            pattern = current;
        }
        if stable >= 2 && sweeps >= next_attempt {
            match solve_on_support(g, omega, lambda, &pattern, factor) {
                Some(exact) => {
                    beta = exact.beta;
                    c = exact.corr;
                    if opts.record_trace {
                        trace.push(g.objective(&beta, omega, lambda));
                    }
                    if exact.pending <= opts.tolerance {
                        last_change = 0.0;
                        converged = true;
                        break;
                    }
                }
                None => next_attempt = sweeps + 20,
            }
        }
    }
    CdOutcome {
        beta,
        sweeps,
        last_change,
        converged,
        trace,
    }
}

/// `X'y - X'X beta`, touching only the columns of nonzero coefficients.
fn correlations(g: &Gram, beta: &[f64]) -> DVector<f64> {
    let mut c = g.xty.clone();
    for (k, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            c.axpy(-b, &g.gram.column(k), 1.0);
        }
    }
    c
}

fn signs(beta: &[f64]) -> Vec<i8> {
    beta.iter()
        .map(|b| if *b > 0.0 { 1 } else if *b < 0.0 { -1 } else { 0 })
        .collect()
}

/// Exact lasso solution found on a support.
struct Exact {
    beta: Vec<f64>,
    /// `X'y - X'X beta`.
    corr: DVector<f64>,
    /// Largest single-coordinate update a sweep would still make; inactive
    /// coordinates satisfy their KKT bounds and would stay at zero.
    pending: f64,
}

enum SupportSolve {
    Solution(Exact),
    /// Stationary on the support but not optimal; carries the repaired
    /// pattern to try next.
    Repair(Vec<i8>),
    Singular,
}

/// Minimizer under a fixed support and sign pattern. It is the lasso
/// solution when it keeps those signs and satisfies the inactive-coordinate
/// KKT bounds; otherwise, the pattern with sign-flipped coordinates dropped
/// and violating ones added is returned for another attempt.
fn solve_on_pattern(
    g: &Gram,
    omega: &[f64],
    lambda: f64,
    pattern: &[i8],
    factor: &mut SupportFactor,
) -> SupportSolve {
    let p = pattern.len();
    let in_support: Vec<bool> = pattern.iter().map(|&s| s != 0).collect();
    let support: Vec<usize> = (0..p).filter(|&j| in_support[j]).collect();
    let mut beta = vec![0.0; p];
    if !support.is_empty() {
        if !factor.cover(g, &support, &in_support) {
            return SupportSolve::Singular;
        }
        let mut b: Vec<f64> = factor
            .order
            .iter()
            .map(|&j| g.xty[j] - 0.5 * lambda * omega[j] * f64::from(pattern[j]))
            .collect();
        factor.solve(&mut b);
        let mut repaired = pattern.to_vec();
        let mut flipped = false;
        for (&j, &v) in factor.order.iter().zip(&b) {
            if v.is_nan() {
                return SupportSolve::Singular;
            }
            if v == 0.0 || v.signum() != f64::from(pattern[j]) {
                repaired[j] = 0;
                flipped = true;
            } else {
                beta[j] = v;
            }
        }
        if flipped {
            return SupportSolve::Repair(repaired);
        }
    }

    let corr = correlations(g, &beta);
    let mut next = pattern.to_vec();
    let mut pending: f64 = 0.0;
    for j in 0..p {
        if !omega[j].is_finite() {
            continue;
        }
        let half_bound = 0.5 * lambda * omega[j];
        if in_support[j] {
            let gap = corr[j] - half_bound * f64::from(pattern[j]);
            pending = pending.max(gap.abs() / g.gram[(j, j)]);
        } else if corr[j].abs() > half_bound {
            next[j] = if corr[j] > 0.0 { 1 } else { -1 };
        }
    }
    if next == pattern {
        SupportSolve::Solution(Exact {
            beta,
            corr,
            pending,
        })
    } else {
        SupportSolve::Repair(next)
    }
}

/// Exact lasso solution reached from `pattern` by a few rounds of support
/// repair, if any.
fn solve_on_support(
    g: &Gram,
    omega: &[f64],
    lambda: f64,
    pattern: &[i8],
    factor: &mut SupportFactor,
) -> Option<Exact> {
    const MAX_REPAIRS: usize = 4;
    let mut pattern = pattern.to_vec();
    for _ in 0..=MAX_REPAIRS {
        match solve_on_pattern(g, omega, lambda, &pattern, factor) {
            SupportSolve::Solution(exact) => return Some(exact),
            SupportSolve::Repair(next) => pattern = next,
            SupportSolve::Singular => return None,
        }
    }
    None
}

fn validate(p: usize, omega: &[f64], lambda: f64) -> Result<()> {
    if omega.len() != p {
        return Err(PacsError::DimensionMismatch {
            expected: p,
            got: omega.len(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PacsError::Config(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    if let Some(w) = omega.iter().find(|w| !(**w > 0.0)) {
        return Err(PacsError::Config(format!(
            "adaptive weights must be positive or +inf, got {w}"
        )));
    }
    Ok(())
}

/// Adaptive lasso on a transformed arm with default solver options.
pub fn adaptive_lasso(ts: &TransformedSample, omega: &[f64], lambda: f64) -> Result<PenalizedFit> {
    adaptive_lasso_with(ts, omega, lambda, &LassoOptions::default(), None)
}

/// Adaptive lasso with explicit options and an optional warm start.
pub fn adaptive_lasso_with(
    ts: &TransformedSample,
    omega: &[f64],
    lambda: f64,
    opts: &LassoOptions,
    warm: Option<&[f64]>,
) -> Result<PenalizedFit> {
    let p = ts.p();
    validate(p, omega, lambda)?;
    let raw = Gram::new(&ts.x_tilde, &ts.y_tilde);

    let scales: Vec<f64> = if opts.standardize {
        let m = ts.len().max(1) as f64;
        (0..p)
            .map(|j| {
                let s = (raw.gram[(j, j)] / m).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; p]
    };
    let g = if opts.standardize {
        Gram {
            gram: DMatrix::from_fn(p, p, |j, k| raw.gram[(j, k)] / (scales[j] * scales[k])),
            xty: DVector::from_fn(p, |j, _| raw.xty[j] / scales[j]),
            yty: raw.yty,
        }
    } else {
        raw
    };

    let start: Vec<f64> = match warm {
        Some(b) if b.len() == p => b.iter().zip(&scales).map(|(b, s)| b * s).collect(),
        _ => vec![0.0; p],
    };
    let mut factor = SupportFactor::new(p);
    let mut cd = coordinate_descent(&g, omega, lambda, &start, opts, &mut factor);
    let mut kkt = kkt_violation(&g, &cd.beta, omega, lambda);
    // Slowly mixing coordinates can stall under the step tolerance while the
    // stationarity residual is still visible; polish with a tighter one.
    let mut polish = *opts;
    for _ in 0..4 {
        if !cd.converged || kkt <= KKT_TARGET || polish.tolerance == 0.0 {
            break;
        }
        polish.tolerance *= 1e-2;
        polish.record_trace = false;
        let sweeps = cd.sweeps;
        let trace = std::mem::take(&mut cd.trace);
        cd = coordinate_descent(&g, omega, lambda, &cd.beta, &polish, &mut factor);
        cd.sweeps += sweeps;
        cd.trace = trace;
        kkt = kkt_violation(&g, &cd.beta, omega, lambda);
    }
    if !cd.converged {
        return Err(PacsError::NotConverged {
            sweeps: cd.sweeps,
            last_change: cd.last_change,
            kkt,
        });
    }
    let objective_value = g.objective(&cd.beta, omega, lambda);
    let beta_hat: Vec<f64> = cd.beta.iter().zip(&scales).map(|(b, s)| b / s).collect();
    let active_set = (0..p).filter(|&j| beta_hat[j] != 0.0).collect();
    Ok(PenalizedFit {
        eta_hat: ts.intercept_for(&beta_hat),
        beta_hat,
        lambda,
        gamma: None,
        omega: omega.to_vec(),
        active_set,
        objective_value,
        kkt_violation: kkt,
        sweeps: cd.sweeps,
        objective_trace: cd.trace,
    })
}

/// `lambda_max` of a transformed arm: the smallest penalty giving `beta = 0`.
pub fn lambda_max(ts: &TransformedSample, omega: &[f64]) -> f64 {
    Gram::new(&ts.x_tilde, &ts.y_tilde).lambda_max(omega)
}
