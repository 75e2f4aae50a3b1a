//! Association statistics between two vectors and the no-intercept OLS slope.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Dimension(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::Degenerate("need at least two observations"));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Centered cross and square sums `(Sxy, Sxx, Syy)`.
fn centered_sums(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    x.iter()
        .zip(y)
        .fold((0.0, 0.0, 0.0), |(sxy, sxx, syy), (a, b)| {
            let (dx, dy) = (a - mx, b - my);
            (sxy + dx * dy, sxx + dx * dx, syy + dy * dy)
        })
}

/// `T_n = (1/n) sum (x_i - xbar)(y_i - ybar)`.
pub fn sample_covariance(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_lengths(x, y)?;
    Ok(centered_sums(x, y).0 / x.len() as f64)
}

/// Pearson correlation; constant inputs are an error rather than `NaN`.
pub fn sample_correlation(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_lengths(x, y)?;
    let (sxy, sxx, syy) = centered_sums(x, y);
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(StatsError::Degenerate("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationSample {
    pub t_n: f64,
    pub rho_n: f64,
    pub scaled_t: f64,
    pub scaled_rho: f64,
}

impl AssociationSample {
    pub fn compute(x: &[f64], y: &[f64]) -> Result<Self, StatsError> {
        check_lengths(x, y)?;
        let n = x.len() as f64;
        let (sxy, sxx, syy) = centered_sums(x, y);
        if sxx <= 0.0 || syy <= 0.0 {
            return Err(StatsError::Degenerate("zero variance"));
        }
        let t_n = sxy / n;
        let rho_n = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
        Ok(AssociationSample {
            t_n,
            rho_n,
            scaled_t: n.sqrt() * t_n,
            scaled_rho: n.sqrt() * rho_n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub beta_hat: f64,
    /// `e'e / (n |x|^2)`.
    pub naive_var: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub covers_zero: bool,
}

impl OlsFit {
    pub fn covers(&self, beta: f64) -> bool {
        self.ci_low <= beta && beta <= self.ci_high
    }
}

/// Two-sided normal critical value `z_{1 - alpha/2}`.
pub fn normal_critical_value(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Regression of `y` on `x` without intercept, with a level `1 - alpha` normal CI.
pub fn ols_fit(x: &[f64], y: &[f64], alpha: f64) -> Result<OlsFit, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Dimension(x.len(), y.len()));
    }
    let xx: f64 = x.iter().map(|v| v * v).sum();
    if xx <= 0.0 {
        return Err(StatsError::Degenerate("regressor is identically zero"));
    }
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let beta_hat = xy / xx;
    let ee: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - beta_hat * a).powi(2))
        .sum();
    let naive_var = ee / (x.len() as f64 * xx);
    let half = normal_critical_value(alpha) * naive_var.sqrt();
    let (ci_low, ci_high) = (beta_hat - half, beta_hat + half);
    Ok(OlsFit {
        beta_hat,
        naive_var,
        ci_low,
        ci_high,
        covers_zero: ci_low <= 0.0 && 0.0 <= ci_high,
    })
}

/// `x' Sigma_eps x / |x|^4`, the conditional variance of the OLS slope.
pub fn ols_true_variance(x: &[f64], sigma_eps: &DMatrix<f64>) -> Result<f64, StatsError> {
    let n = x.len();
    if sigma_eps.nrows() != n || sigma_eps.ncols() != n {
        return Err(StatsError::Dimension(n, sigma_eps.nrows()));
    }
    let xx: f64 = x.iter().map(|v| v * v).sum();
    if xx <= 0.0 {
        return Err(StatsError::Degenerate("regressor is identically zero"));
    }
    let v = nalgebra::DVector::from_column_slice(x);
    Ok(v.dot(&(sigma_eps * &v)) / (xx * xx))
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Mid-ranks, 1-based, ties averaged.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let (rx, ry) = (ranks(x), ranks(y));
    if has_ties(x) || has_ties(y) {
        return sample_correlation(&rx, &ry);
    }
    if x.len() != y.len() {
        return Err(StatsError::Dimension(x.len(), y.len()));
    }
    let n = x.len() as f64;
    if x.len() < 2 {
        return Err(StatsError::Degenerate("fewer than two observations"));
    }
    // Integer ranks keep this exact, so monotone data gives exactly +-1.
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

fn has_ties(x: &[f64]) -> bool {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

/// Bootstrap standard error of `stat` over `b` resamples.
pub fn bootstrap_se(x: &[f64], b: usize, stat: impl Fn(&[f64]) -> f64, rng: &mut impl Rng) -> f64 {
    let mut buf = vec![0.0; x.len()];
    let values: Vec<f64> = (0..b)
        .map(|_| {
            for v in buf.iter_mut() {
                *v = x[rng.random_range(0..x.len())];
            }
            stat(&buf)
        })
        .collect();
    variance(&values).sqrt()
}
