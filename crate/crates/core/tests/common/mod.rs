//! Independent reference computations shared by the integration tests. Nothing
//! here calls into the solver internals; objectives and optimality checks are
//! evaluated from the design matrix with plain loops.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `y - X beta`.
pub fn residual(x: &DMatrix<f64>, y: &[f64], beta: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| y[i] - (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum::<f64>())
        .collect()
}

/// `|y - X beta|^2 + lambda sum_j omega_j |beta_j|`, pinned terms skipped
/// when their coefficient is zero.
pub fn lasso_objective(x: &DMatrix<f64>, y: &[f64], omega: &[f64], lambda: f64, beta: &[f64]) -> f64 {
    let rss: f64 = residual(x, y, beta).iter().map(|r| r * r).sum();
    let pen: f64 = beta
        .iter()
        .zip(omega)
        .filter(|(b, _)| **b != 0.0)
        .map(|(b, w)| w * b.abs())
        .sum();
    rss + lambda * pen
}

/// Largest violation of the lasso stationarity conditions, divided by
/// `max(1, |2X'y|_inf)`.
pub fn kkt_residual(x: &DMatrix<f64>, y: &[f64], omega: &[f64], lambda: f64, beta: &[f64]) -> f64 {
    let r = residual(x, y, beta);
    let mut scale: f64 = 1.0;
    let mut worst: f64 = 0.0;
    for j in 0..x.ncols() {
        let xty: f64 = (0..x.nrows()).map(|i| x[(i, j)] * y[i]).sum();
        scale = scale.max(2.0 * xty.abs());
        if !omega[j].is_finite() {
            continue;
        }
        let g: f64 = 2.0 * (0..x.nrows()).map(|i| x[(i, j)] * r[i]).sum::<f64>();
        let bound = lambda * omega[j];
        let v = if beta[j] != 0.0 {
            (g - bound * beta[j].signum()).abs()
        } else {
            (g.abs() - bound).max(0.0)
        };
        worst = worst.max(v);
    }
    worst / scale
}

/// Minimizes `f` over a box by a coarse grid followed by successively finer
/// grids around the incumbent and a final compass search along coordinate
/// and diagonal directions. For a smooth convex function plus a separable
/// `l1` term the coordinate directions alone certify optimality, so the
/// search cannot stall away from the minimizer.
pub fn grid_then_compass(f: &dyn Fn(&[f64]) -> f64, dim: usize, half_width: f64) -> (Vec<f64>, f64) {
    let mut best = vec![0.0; dim];
    let mut best_f = f(&best);
    let mut center = vec![0.0; dim];
    let mut width = half_width;
    const STEPS: usize = 40;
    for _ in 0..4 {
        let h = 2.0 * width / STEPS as f64;
        let mut idx = vec![0usize; dim];
        loop {
            let pt: Vec<f64> = (0..dim).map(|j| center[j] - width + h * idx[j] as f64).collect();
            let v = f(&pt);
            if v < best_f {
                best_f = v;
                best = pt;
            }
            let mut k = 0;
            while k < dim {
                idx[k] += 1;
                if idx[k] <= STEPS {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == dim {
                break;
            }
        }
        center = best.clone();
        width = 2.0 * h;
    }
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        dirs.push(e.clone());
        e[j] = -1.0;
        dirs.push(e);
        for k in j + 1..dim {
            for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut e = vec![0.0; dim];
                e[j] = a;
                e[k] = b;
                dirs.push(e);
            }
        }
    }
    // Zero is a kink of every |b_j|; snapping candidates keeps them reachable.
    let mut step = width;
    while step > 1e-13 {
        let mut improved = false;
        for d in &dirs {
            let cand: Vec<f64> = best.iter().zip(d).map(|(b, e)| b + step * e).collect();
            let v = f(&cand);
            if v < best_f {
                best_f = v;
                best = cand;
                improved = true;
            }
        }
        for j in 0..dim {
            if best[j] != 0.0 && best[j].abs() < 4.0 * step {
                let mut cand = best.clone();
                cand[j] = 0.0;
                let v = f(&cand);
                if v <= best_f {
                    best_f = v;
                    best = cand;
                    improved = true;
                }
            }
        }
        step = if improved {
            (2.0 * step).min(half_width)
        } else {
            0.5 * step
        };
    }
    (best, best_f)
}

/// Minimizes `sum_i w_i (y_i - eta - x_i'beta)^2 + lambda sum_j omega_j |beta_j|`
/// over `(eta, beta)` by accelerated proximal gradient (FISTA with adaptive
/// restart) on the untransformed data. Returns `(eta, beta)`.
pub fn fista_weighted(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    omega: &[f64],
    lambda: f64,
) -> (f64, Vec<f64>) {
    let (n, p) = x.shape();
    let k = p + 1;
    // Design with a leading column of ones; gradient of the smooth part is
    // -2 Z'W(y - Z theta).
    let z = |i: usize, j: usize| if j == 0 { 1.0 } else { x[(i, j - 1)] };
    let mut zwz = DMatrix::<f64>::zeros(k, k);
    let mut zwy = vec![0.0; k];
    for i in 0..n {
        for a in 0..k {
            zwy[a] += w[i] * z(i, a) * y[i];
            for b in 0..k {
                zwz[(a, b)] += w[i] * z(i, a) * z(i, b);
            }
        }
    }
    let lip = 2.0 * zwz.clone().symmetric_eigen().eigenvalues.max();
    let step = 1.0 / lip;
    let grad = |theta: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|a| 2.0 * ((0..k).map(|b| zwz[(a, b)] * theta[b]).sum::<f64>() - zwy[a]))
            .collect()
    };
    let prox = |v: &[f64]| -> Vec<f64> {
        let mut out = v.to_vec();
        for j in 1..k {
            let t = step * lambda * omega[j - 1];
            out[j] = if !t.is_finite() {
                0.0
            } else {
                v[j].signum() * (v[j].abs() - t).max(0.0)
            };
        }
        out
    };
    let mut theta = vec![0.0; k];
    let mut mom = theta.clone();
    let mut t = 1.0f64;
    for _ in 0..2_000_000 {
        let g = grad(&mom);
        let v: Vec<f64> = mom.iter().zip(&g).map(|(m, g)| m - step * g).collect();
        let next = prox(&v);
        let change = next
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // Restart when the momentum points uphill.
        let uphill: f64 = (0..k).map(|j| (mom[j] - next[j]) * (next[j] - theta[j])).sum();
        let t_next = if uphill > 0.0 { 1.0 } else { (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0 };
        mom = (0..k)
            .map(|j| next[j] + (t - 1.0) / t_next * (next[j] - theta[j]))
            .collect();
        if uphill > 0.0 {
            mom = next.clone();
        }
        theta = next;
        t = t_next;
        if change < 1e-14 {
            break;
        }
    }
    (theta[0], theta[1..].to_vec())
}

/// Ordinary least squares through an explicit inverse of `X'X`.
pub fn ols_by_inverse(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let xtx = x.transpose() * x;
    let inv = xtx.try_inverse().expect("full column rank");
    let xty = x.transpose() * nalgebra::DVector::from_column_slice(y);
    (inv * xty).iter().copied().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
