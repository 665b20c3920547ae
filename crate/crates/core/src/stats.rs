//! Sample summaries and distances to the normal law.
//!
//! The bounded-Lipschitz distance is never computed: the 1-Wasserstein
//! distance dominates it and is what thresholds are set on.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub se_mean: f64,
    /// Large-sample SE of the variance, `sqrt((m4 - (n-3)/(n-1) s⁴) / n)`.
    pub se_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub w1: f64,
    pub ks: f64,
    pub n: usize,
}

impl DistanceReport {
    /// Upper bound on the bounded-Lipschitz distance.
    pub fn d_bw_bound(&self) -> f64 {
        self.w1
    }
}

pub fn summarize(sample: &[f64]) -> Result<SampleSummary> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 values, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let m2 = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let m4 = sample.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let variance = m2 * nf / (nf - 1.0);
    let se_mean = (variance / nf).sqrt();
    let se_variance = ((m4 - (nf - 3.0) / (nf - 1.0) * variance * variance) / nf)
        .max(0.0)
        .sqrt();
    Ok(SampleSummary {
        n,
        mean,
        variance,
        se_mean,
        se_variance,
    })
}

fn normal(mu: f64, sigma: f64) -> Result<Normal> {
    if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "degenerate normal N({mu}, {sigma}²)"
        )));
    }
    Normal::new(mu, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `N(mu, sigma²)` quantiles at the mid-ranks `(k - ½)/n`.
pub fn normal_midrank_quantiles(n: usize, mu: f64, sigma: f64) -> Result<Vec<f64>> {
    let dist = normal(mu, sigma)?;
    Ok((1..=n)
        .map(|k| dist.inverse_cdf((k as f64 - 0.5) / n as f64))
        .collect())
}

pub fn w1_to_normal(sample: &[f64], mu: f64, sigma: f64) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::InvalidParameter("w1 needs at least 2 values".into()));
    }
    let q = normal_midrank_quantiles(sample.len(), mu, sigma)?;
    let xs = sorted(sample);
    Ok(xs.iter().zip(&q).map(|(x, z)| (x - z).abs()).sum::<f64>() / xs.len() as f64)
}

/// Sup distance between the empirical CDF and `N(mu, sigma²)`.
pub fn ks_to_normal(sample: &[f64], mu: f64, sigma: f64) -> Result<f64> {
    let dist = normal(mu, sigma)?;
    if sample.is_empty() {
        return Err(Error::Empty("ks needs a sample"));
    }
    let xs = sorted(sample);
    let n = xs.len() as f64;
    let mut sup = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        // Step over ties so the jump is taken in one go.
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = dist.cdf(xs[i]);
        sup = sup
            .max((f - i as f64 / n).abs())
            .max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    Ok(sup)
}

pub fn distance_to_normal(sample: &[f64], mu: f64, sigma: f64) -> Result<DistanceReport> {
    let report = DistanceReport {
        w1: w1_to_normal(sample, mu, sigma)?,
        ks: ks_to_normal(sample, mu, sigma)?,
        n: sample.len(),
    };
    debug_assert!(report.d_bw_bound() >= 0.0 && (0.0..=1.0).contains(&report.ks));
    Ok(report)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("ks needs two non-empty samples"));
    }
    let (xa, xb) = (sorted(a), sorted(b));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup = 0.0f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// Asymptotic two-sample KS critical value at level `alpha`,
/// `sqrt(-ln(alpha/2)/2) · sqrt((n+m)/(nm))`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// `∫ |F_a - F_b|`, the 1-Wasserstein distance between two empirical laws.
pub fn w1_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("w1 needs two non-empty samples"));
    }
    let (xa, xb) = (sorted(a), sorted(b));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let mut merged: Vec<f64> = xa.iter().chain(&xb).copied().collect();
    merged.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    for w in merged.windows(2) {
        while i < xa.len() && xa[i] <= w[0] {
            i += 1;
        }
        while j < xb.len() && xb[j] <= w[0] {
            j += 1;
        }
        total += (i as f64 / na - j as f64 / nb).abs() * (w[1] - w[0]);
    }
    Ok(total)
}

pub fn two_sample_report(a: &[f64], b: &[f64]) -> Result<DistanceReport> {
    Ok(DistanceReport {
        w1: w1_two_sample(a, b)?,
        ks: ks_two_sample(a, b)?,
        n: a.len().min(b.len()),
    })
}

pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(
            "correlation needs paired samples of size >= 2".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Ordinary least squares `y ≈ intercept + slope · x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(
            "regression needs paired samples of size >= 2".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("regressor has no spread".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
