mod common;

use appeal_scope::tweedie::{fit_tweedie_glm, total_deviance, TweedieSpec};
use nalgebra::DMatrix;

use common::{deviance_at, nelder_mead, tweedie_problem};

const P: f64 = 1.5;

#[test]
fn irls_matches_direct_deviance_minimiser() {
    for seed in [1u64, 2, 3] {
        let (x, y) = tweedie_problem(seed, 500, &[0.5, -1.0, 0.4, 0.3], P, 1.0);
        let fit = fit_tweedie_glm(&x, &y, &TweedieSpec::default()).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let start = [mean.ln(), 0.0, 0.0, 0.0];
        let oracle = nelder_mead(|b| deviance_at(&x, &y, b, P), &start, 0.5, 1e-10);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-4, "seed {seed}: irls {a} vs simplex {b}");
        }
        let (d_fit, d_oracle) = (deviance_at(&x, &y, &fit.coefficients, P), deviance_at(&x, &y, &oracle, P));
        assert!((d_fit - d_oracle).abs() < 1e-9 * d_oracle, "{d_fit} vs {d_oracle}");
    }
}

#[test]
fn score_vanishes_at_the_fit() {
    let (x, y) = tweedie_problem(11, 2000, &[1.0, -2.0, 0.2, 0.3], P, 1.0);
    let n = y.len() as f64;
    let fit = fit_tweedie_glm(&x, &y, &TweedieSpec::default()).unwrap();
    let h = 1e-5;
    for j in 0..fit.coefficients.len() {
        let mut up = fit.coefficients.clone();
        let mut down = fit.coefficients.clone();
        up[j] += h;
        down[j] -= h;
        let grad = (deviance_at(&x, &y, &up, P) - deviance_at(&x, &y, &down, P)) / (2.0 * h);
        assert!(grad.abs() < 1e-4 * n, "column {j}: gradient {grad}");
    }
}

#[test]
fn row_permutation_leaves_fit_unchanged() {
    let (x, y) = tweedie_problem(5, 800, &[0.8, -1.5, 0.1, 0.25], P, 1.0);
    let fit = fit_tweedie_glm(&x, &y, &TweedieSpec::default()).unwrap();
    let n = y.len();
    let perm: Vec<usize> = (0..n).map(|i| (i * 337 + 11) % n).collect();
    let xp = DMatrix::from_fn(n, x.ncols(), |i, j| x[(perm[i], j)]);
    let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    let fitp = fit_tweedie_glm(&xp, &yp, &TweedieSpec::default()).unwrap();
    for (a, b) in fit.coefficients.iter().zip(&fitp.coefficients) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    assert!((fit.deviance - fitp.deviance).abs() < 1e-10 * fit.deviance.max(1.0));
}

#[test]
fn deviance_trace_never_increases() {
    for seed in 20..30u64 {
        let (x, y) = tweedie_problem(seed, 400, &[0.3, -2.42, 0.5, 0.6], P, 2.0);
        let fit = fit_tweedie_glm(&x, &y, &TweedieSpec::default()).unwrap();
        assert!(fit.converged);
        for w in fit.deviance_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", fit.deviance_trace);
        }
        assert!((total_deviance(&y, &fit.fitted, P) - fit.deviance).abs() < 1e-9 * fit.deviance);
        let resid: Vec<f64> = y.iter().zip(&fit.fitted).map(|(a, b)| a - b).collect();
        assert_eq!(resid, fit.residuals);
    }
}

#[test]
fn standard_errors_match_inverse_information() {
    // Direct (X'WX)^-1 with W = μ^(2−p), scaled by the Pearson dispersion.
    let (x, y) = tweedie_problem(8, 600, &[0.4, -1.0, 0.3, 0.2], P, 1.0);
    let fit = fit_tweedie_glm(&x, &y, &TweedieSpec::default()).unwrap();
    let w: Vec<f64> = fit.fitted.iter().map(|m| m.powf(2.0 - P)).collect();
    let k = x.ncols();
    let xtwx: DMatrix<f64> =
        DMatrix::from_fn(k, k, |a, b| (0..y.len()).map(|i| x[(i, a)] * w[i] * x[(i, b)]).sum());
    let inv = xtwx.try_inverse().unwrap();
    for j in 0..k {
        let se = (fit.dispersion * inv[(j, j)]).sqrt();
        assert!((se - fit.standard_errors[j]).abs() < 1e-8 * se, "{se} vs {}", fit.standard_errors[j]);
    }
}
