mod common;

use common::*;
use nalgebra::DMatrix;
use pacs_core::propensity::{fit_logistic_design, log_likelihood, score};
use pacs_core::sim::{generate, ScenarioConfig};
use pacs_core::{fit_logistic, predict_propensity, Dataset, LogisticOptions, PacsError, PropensityFit};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Log-likelihood written out directly, with a stable `log(1 + e^t)`.
fn ll_direct(z: &DMatrix<f64>, d: &[f64], a: &[f64]) -> f64 {
    (0..z.nrows())
        .map(|i| {
            let t: f64 = (0..z.ncols()).map(|j| z[(i, j)] * a[j]).sum();
            let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
            d[i] * t - softplus
        })
        .sum()
}

fn logistic_sample(rng: &mut ChaCha8Rng, n: usize, alpha: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let x = normal_matrix(rng, n, alpha.len());
    let d = (0..n)
        .map(|i| {
            let t: f64 = (0..alpha.len()).map(|j| x[(i, j)] * alpha[j]).sum();
            let prob = 1.0 / (1.0 + (-t).exp());
            if rng.random_bool(prob) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    (x, d)
}

#[test]
fn independent_treatment_gives_small_coefficients() {
    let mut rng = rng(41);
    let (x, d) = logistic_sample(&mut rng, 10_000, &[0.0; 4]);
    let fit = fit_logistic_design(&x, &d, &LogisticOptions::default()).unwrap();
    assert!(fit.converged);
    let worst = fit.alpha_hat.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    assert!(worst <= 0.1, "max |alpha| = {worst}");
}

#[test]
fn matches_golden_section_search_in_one_dimension() {
    let x = DMatrix::from_column_slice(6, 1, &[-1.0, -0.5, 0.0, 0.5, 1.0, 2.0]);
    let d = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    let fit = fit_logistic_design(&x, &d, &LogisticOptions::default()).unwrap();

    let f = |a: f64| -ll_direct(&x, &d, &[a]);
    let (mut lo, mut hi) = (-20.0f64, 20.0f64);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let (a, b) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let oracle = 0.5 * (lo + hi);
    assert!((fit.alpha_hat[0] - oracle).abs() <= 1e-6, "{} vs {oracle}", fit.alpha_hat[0]);
}

#[test]
fn intercept_only_fit_recovers_the_logit_of_the_mean() {
    let x = DMatrix::<f64>::zeros(8, 0);
    let d = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    let opts = LogisticOptions { include_intercept: true, ..LogisticOptions::default() };
    let fit = fit_logistic_design(&x, &d, &opts).unwrap();
    assert!(fit.alpha_hat[0].abs() < 1e-12);
    let d = [1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    let fit = fit_logistic_design(&x, &d, &opts).unwrap();
    assert!((fit.alpha_hat[0] - (5.0f64 / 3.0).ln()).abs() < 1e-10);
}

#[test]
fn converged_fits_are_stationary_and_monotone() {
    let mut rng = rng(42);
    for case in 0..40 {
        let n = rng.random_range(60..400);
        let p = rng.random_range(1..8);
        let alpha: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (x, d) = logistic_sample(&mut rng, n, &alpha);
        let intercept = case % 2 == 0;
        let opts = LogisticOptions { include_intercept: intercept, ..LogisticOptions::default() };
        let fit = match fit_logistic_design(&x, &d, &opts) {
            Ok(f) => f,
            Err(PacsError::Separation { .. }) => continue,
            Err(e) => panic!("case {case}: {e}"),
        };
        assert!(fit.converged, "case {case}");
        let z = if intercept { x.clone().insert_column(0, 1.0) } else { x.clone() };
        // Score recomputed from scratch.
        let worst = (0..z.ncols())
            .map(|j| {
                (0..n)
                    .map(|i| {
                        let t: f64 = (0..z.ncols()).map(|k| z[(i, k)] * fit.alpha_hat[k]).sum();
                        (d[i] - 1.0 / (1.0 + (-t).exp())) * z[(i, j)]
                    })
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8 * n as f64, "case {case}: score {worst:e}");
        // Non-decreasing up to the rounding of an n-term sum.
        for pair in fit.trace.windows(2) {
            let slack = 1e-15 * n as f64 * pair[0].abs().max(1.0);
            assert!(pair[1] >= pair[0] - slack, "case {case}: {} then {}", pair[0], pair[1]);
        }
        assert!((fit.log_likelihood - ll_direct(&z, &d, &fit.alpha_hat)).abs() < 1e-9 * n as f64);
    }
}

#[test]
fn analytic_score_matches_finite_differences() {
    let mut rng = rng(43);
    for point in 0..100 {
        let n = rng.random_range(10..80);
        let k = rng.random_range(1..6);
        let z = normal_matrix(&mut rng, n, k);
        let d: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
        let a: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        assert!((log_likelihood(&z, &d, &a) - ll_direct(&z, &d, &a)).abs() < 1e-10 * n as f64);
        let s = score(&z, &d, &a);
        let scale = s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..k {
            let h = 1e-5;
            let mut up = a.clone();
            let mut dn = a.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (ll_direct(&z, &d, &up) - ll_direct(&z, &d, &dn)) / (2.0 * h);
            let rel = (fd - s[j]).abs() / scale;
            assert!(rel <= 1e-5, "point {point}, coordinate {j}: {fd} vs {}", s[j]);
        }
    }
}

#[test]
fn prediction_is_the_clipped_logistic() {
    let mut alpha = vec![0.0; 8];
    alpha[0] = 0.4;
    alpha[1] = 0.4;
    let fit = PropensityFit {
        alpha_hat: alpha,
        include_intercept: false,
        p_hat: Vec::new(),
        converged: true,
        iterations: 0,
        log_likelihood: 0.0,
        score_norm: 0.0,
        clip_epsilon: 1e-6,
        trace: Vec::new(),
    };
    let mut e1 = vec![0.0; 8];
    e1[0] = 1.0;
    assert!((predict_propensity(&fit, &e1).unwrap() - 0.598688).abs() < 1e-6);
    assert_eq!(predict_propensity(&fit, &[0.0; 8]).unwrap(), 0.5);
    let mut far = vec![0.0; 8];
    far[0] = 1e3;
    assert_eq!(predict_propensity(&fit, &far).unwrap(), 1.0 - 1e-6);
    assert!(predict_propensity(&fit, &[1.0; 3]).is_err());
}

#[test]
fn separated_classes_are_reported() {
    let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
    let ds = Dataset::with_default_names(
        vec![0.0; 6],
        vec![false, false, false, true, true, true],
        x,
    )
    .unwrap();
    let err = fit_logistic(&ds, &LogisticOptions::default()).unwrap_err();
    assert!(matches!(err, PacsError::Separation { .. }), "{err}");
}

fn alpha_rmse(n: usize, reps: usize) -> f64 {
    let mut cfg = ScenarioConfig::s2(true, n, 20).unwrap();
    cfg.seed = 44;
    let mut sq = 0.0;
    for rep in 0..reps {
        let ds = generate(&cfg, rep).unwrap();
        let fit = fit_logistic(&ds, &LogisticOptions::default()).unwrap();
        sq += fit
            .alpha_hat
            .iter()
            .zip(&cfg.alpha)
            .map(|(a, t)| (a - t).powi(2))
            .sum::<f64>();
    }
    (sq / (reps * cfg.p) as f64).sqrt()
}

#[test]
fn error_halves_when_the_sample_quadruples() {
    let small = alpha_rmse(1000, 100);
    let large = alpha_rmse(4000, 100);
    let ratio = large / small;
    eprintln!("RMSE n=1000 {small:.4}, n=4000 {large:.4}, ratio {ratio:.3}");
    assert!((0.35..=0.65).contains(&ratio), "ratio {ratio}");
}
