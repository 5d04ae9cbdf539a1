//! Tweedie GLM with log link, fitted by iteratively reweighted least squares.
//!
//! For variance power `1 < p < 2` the Tweedie family is a compound
//! Poisson–Gamma distribution: an exact point mass at zero plus a continuous
//! positive part, with `Var(y) = φ·μ^p`.
//!
//! Under the log link each IRLS step solves a weighted least-squares problem
//! with weights `μ^(2−p)` and working response `η + (y − μ)/μ`. The
//! subproblem is solved by a Householder QR of the weighted design rather than
//! the normal equations, since the design mixes 0/1 dummies with raw account
//! ages in days. A step that increases the deviance is halved back toward the
//! previous coefficients, at most [`MAX_STEP_HALVINGS`] times.

use nalgebra::{DMatrix, DVector};
use libm::erfc;
use thiserror::Error;

use crate::table::{Cell, Table};

pub const MAX_STEP_HALVINGS: usize = 20;

/// Relative size under which a column's QR pivot marks it as linearly
/// dependent on the preceding columns.
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TweedieError {
    #[error("Tweedie power must lie in (1, 2), got {0}")]
    InvalidPower(f64),
    #[error("mean must be positive, got {0}")]
    NonPositiveMean(f64),
    #[error("response must be finite and non-negative, got {0}")]
    NegativeResponse(f64),
    #[error("response is identically zero")]
    AllZeroResponse,
    #[error("design has {rows} rows and {cols} columns; need more rows than columns")]
    TooFewRows { rows: usize, cols: usize },
    #[error("design has {x} rows but response has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("design is rank deficient; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<usize> },
    #[error("design contains a non-finite value")]
    NonFiniteDesign,
    #[error("fit did not converge")]
    NotConverged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TweedieSpec {
    pub power: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for TweedieSpec {
    fn default() -> Self {
        Self { power: 1.5, max_iterations: 100, tolerance: 1e-8 }
    }
}

impl TweedieSpec {
    fn check(&self) -> Result<(), TweedieError> {
        if !(self.power > 1.0 && self.power < 2.0) {
            return Err(TweedieError::InvalidPower(self.power));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// One per design column, intercept first.
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub z_statistics: Vec<f64>,
    pub p_values: Vec<f64>,
    pub dispersion: f64,
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Response-scale residuals `y − μ`.
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Deviance after each accepted iteration.
    pub deviance_trace: Vec<f64>,
}

fn unit_deviance_unchecked(y: f64, mu: f64, p: f64) -> f64 {
    if y == mu {
        return 0.0;
    }
    let y_term = if y == 0.0 { 0.0 } else { y.powf(2.0 - p) / ((1.0 - p) * (2.0 - p)) };
    let d = 2.0 * (y_term - y * mu.powf(1.0 - p) / (1.0 - p) + mu.powf(2.0 - p) / (2.0 - p));
    // The expression is non-negative; cancellation near y = μ can leave a
    // rounding-sized negative.
    d.max(0.0)
}

/// Tweedie unit deviance `d(y, μ)` for `1 < p < 2`.
pub fn tweedie_unit_deviance(y: f64, mu: f64, p: f64) -> Result<f64, TweedieError> {
    if !(p > 1.0 && p < 2.0) {
        return Err(TweedieError::InvalidPower(p));
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(TweedieError::NonPositiveMean(mu));
    }
    if !(y >= 0.0) || !y.is_finite() {
        return Err(TweedieError::NegativeResponse(y));
    }
    Ok(unit_deviance_unchecked(y, mu, p))
}

/// Sum of unit deviances. Non-finite means give `+∞`.
pub fn total_deviance(y: &[f64], mu: &[f64], p: f64) -> f64 {
    y.iter()
        .zip(mu)
        .map(|(&yi, &mi)| if mi > 0.0 && mi.is_finite() { unit_deviance_unchecked(yi, mi, p) } else { f64::INFINITY })
        .sum()
}

/// Pearson dispersion estimate `Σ (y − μ)² / μ^p / (n − k)`.
pub fn estimate_dispersion(y: &[f64], mu: &[f64], p: f64, k: usize) -> Result<f64, TweedieError> {
    if y.len() != mu.len() {
        return Err(TweedieError::LengthMismatch { x: mu.len(), y: y.len() });
    }
    let n = y.len();
    if n <= k {
        return Err(TweedieError::TooFewRows { rows: n, cols: k });
    }
    let pearson: f64 = y.iter().zip(mu).map(|(&yi, &mi)| (yi - mi).powi(2) / mi.powf(p)).sum();
    Ok(pearson / (n - k) as f64)
}

/// Columns that are (numerically) linear combinations of earlier columns.
pub fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let r = scaled.qr().r();
    (0..x.ncols()).filter(|&j| !(r[(j, j)].abs() > RANK_TOLERANCE)).collect()
}

/// Solves `min ‖√w ⊙ (X β − z)‖` by QR of the weighted design.
fn weighted_least_squares(x: &DMatrix<f64>, w: &[f64], z: &[f64]) -> DVector<f64> {
    let (n, k) = x.shape();
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let a = DMatrix::from_fn(n, k, |i, j| x[(i, j)] * sw[i]);
    let mut b = DVector::from_fn(n, |i, _| z[i] * sw[i]);
    let qr = a.qr();
    qr.q_tr_mul(&mut b);
    let r = qr.r();
    let rhs = b.rows(0, k).into_owned();
    r.solve_upper_triangular(&rhs).expect("full-rank design has invertible R")
}

/// `(Xᵀ W X)⁻¹` from the QR factor of the weighted design.
fn unscaled_covariance(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let a = DMatrix::from_fn(n, k, |i, j| x[(i, j)] * w[i].sqrt());
    let r = a.qr().r();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("full-rank design has invertible R");
    &r_inv * r_inv.transpose()
}

fn linear_predictor(x: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (x * beta).iter().copied().collect()
}

/// Maximum quasi-likelihood Tweedie fit with log link.
pub fn fit_tweedie_glm(x: &DMatrix<f64>, y: &[f64], spec: &TweedieSpec) -> Result<FitResult, TweedieError> {
    spec.check()?;
    let (n, k) = x.shape();
    let p = spec.power;
    if y.len() != n {
        return Err(TweedieError::LengthMismatch { x: n, y: y.len() });
    }
    if n <= k {
        return Err(TweedieError::TooFewRows { rows: n, cols: k });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(TweedieError::NonFiniteDesign);
    }
    if let Some(bad) = y.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(TweedieError::NegativeResponse(*bad));
    }
    if y.iter().all(|v| *v == 0.0) {
        return Err(TweedieError::AllZeroResponse);
    }
    let dependent = dependent_columns(x);
    if !dependent.is_empty() {
        return Err(TweedieError::RankDeficient { columns: dependent });
    }

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut mu: Vec<f64> = y.iter().map(|v| (v + y_mean) / 2.0).collect();
    let mut eta: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
    let mut deviance = total_deviance(y, &mu, p);
    let mut beta: Option<DVector<f64>> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < spec.max_iterations {
        iterations += 1;
        let w: Vec<f64> = mu.iter().map(|m| m.powf(2.0 - p)).collect();
        let z: Vec<f64> = (0..n).map(|i| eta[i] + (y[i] - mu[i]) / mu[i]).collect();
        let mut candidate = weighted_least_squares(x, &w, &z);
        let mut cand_eta = linear_predictor(x, &candidate);
        let mut cand_mu: Vec<f64> = cand_eta.iter().map(|e| e.exp()).collect();
        let mut cand_dev = total_deviance(y, &cand_mu, p);

        if let Some(prev) = &beta {
            let mut halvings = 0;
            while !(cand_dev <= deviance) && halvings < MAX_STEP_HALVINGS {
                candidate = (prev + &candidate) * 0.5;
                cand_eta = linear_predictor(x, &candidate);
                cand_mu = cand_eta.iter().map(|e| e.exp()).collect();
                cand_dev = total_deviance(y, &cand_mu, p);
                halvings += 1;
            }
            if !(cand_dev <= deviance) {
                // No descent direction left: either already at the optimum to
                // rounding, or stuck.
                converged = (cand_dev - deviance).abs() / (deviance.abs() + 0.1) < spec.tolerance;
                break;
            }
        } else if !cand_dev.is_finite() {
            break;
        }

        let change = (deviance - cand_dev).abs() / (cand_dev.abs() + 0.1);
        beta = Some(candidate);
        eta = cand_eta;
        mu = cand_mu;
        deviance = cand_dev;
        trace.push(deviance);
        if change < spec.tolerance {
            converged = true;
            break;
        }
    }

    let beta = match beta {
        Some(b) => b,
        None => return Err(TweedieError::NotConverged),
    };
    let w: Vec<f64> = mu.iter().map(|m| m.powf(2.0 - p)).collect();
    let cov = unscaled_covariance(x, &w);
    let dispersion = estimate_dispersion(y, &mu, p, k)?;
    let standard_errors: Vec<f64> = (0..k).map(|j| (dispersion * cov[(j, j)]).sqrt()).collect();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let z_statistics: Vec<f64> = coefficients.iter().zip(&standard_errors).map(|(b, se)| b / se).collect();
    let p_values = z_statistics.iter().map(|z| two_sided_p(*z)).collect();
    let residuals = y.iter().zip(&mu).map(|(a, b)| a - b).collect();

    Ok(FitResult {
        coefficients,
        standard_errors,
        z_statistics,
        p_values,
        dispersion,
        deviance,
        iterations,
        converged,
        residuals,
        fitted: mu,
        deviance_trace: trace,
    })
}

/// Two-sided normal tail probability.
pub fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Significance code: `***` p < 0.001, `**` p < 0.01, `*` p < 0.05.
pub fn stars(p_value: f64) -> &'static str {
    if p_value < 0.001 {
        "***"
    } else if p_value < 0.01 {
        "**"
    } else if p_value < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldRow {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

pub fn wald_table(fit: &FitResult, names: &[String]) -> Result<Vec<WaldRow>, TweedieError> {
    if !fit.converged {
        return Err(TweedieError::NotConverged);
    }
    if names.len() != fit.coefficients.len() {
        return Err(TweedieError::LengthMismatch { x: fit.coefficients.len(), y: names.len() });
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(j, name)| WaldRow {
            term: name.clone(),
            estimate: fit.coefficients[j],
            std_error: fit.standard_errors[j],
            z: fit.z_statistics[j],
            p_value: fit.p_values[j],
            stars: stars(fit.p_values[j]),
        })
        .collect())
}

pub fn wald_rows_table(rows: &[WaldRow]) -> Table {
    let mut t = Table::new(["term", "estimate", "std_error", "z", "p_value", "stars"]);
    for r in rows {
        t.push(vec![
            r.term.as_str().into(),
            r.estimate.into(),
            r.std_error.into(),
            r.z.into(),
            r.p_value.into(),
            Cell::Text(r.stars.to_string()),
        ]);
    }
    t
}
