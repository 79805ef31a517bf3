//! Ordinary least squares with Student-t confidence intervals.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    /// Two-sided 95% interval for the slope.
    pub slope_ci: (f64, f64),
    pub r2: f64,
    pub n: usize,
}

/// `y ≈ a + b x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::Stability(format!("regression needs two or more paired points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Stability("non-finite regression data".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Stability("regression abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let (slope_se, intercept_se, half) = if n > 2 {
        let s2 = sse / (nf - 2.0);
        let se = (s2 / sxx).sqrt();
        let ise = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 2.0).map_err(|e| Error::Stability(e.to_string()))?.inverse_cdf(0.975);
        (se, ise, t * se)
    } else {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY)
    };
    Ok(LinearFit { slope, intercept, slope_se, intercept_se, slope_ci: (slope - half, slope + half), r2, n })
}

/// OLS of `ln y` on `ln x`; nonpositive entries are rejected.
pub fn loglog(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Stability("log-log regression needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly)
}

/// Empirical quantile by linear interpolation, `p ∈ [0, 1]`.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let t = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = t.floor() as usize;
    let j = (i + 1).min(v.len() - 1);
    v[i] + (t - i as f64) * (v[j] - v[i])
}
