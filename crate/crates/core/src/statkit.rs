//! Small statistics toolkit: two-sample KS, Hill tail index, least squares,
//! and summary statistics with jackknife standard errors.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{invalid, Result};

/// Asymptotic two-sample KS constant at the 5% level.
pub const KS_C_05: f64 = 1.358;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub d: f64,
    pub m: usize,
    pub n: usize,
    pub critical_05: f64,
    pub pass: bool,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return invalid("KS test needs two nonempty samples");
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return invalid("KS test samples contain NaN");
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let (m, n) = (sa.len(), sb.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < m && j < n {
        let x = if sa[i].total_cmp(&sb[j]) == Ordering::Greater { sb[j] } else { sa[i] };
        while i < m && sa[i] == x {
            i += 1;
        }
        while j < n && sb[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / m as f64 - j as f64 / n as f64).abs());
    }
    let critical_05 = KS_C_05 * ((m + n) as f64 / (m as f64 * n as f64)).sqrt();
    Ok(KsResult { d, m, n, critical_05, pass: d < critical_05 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HillEstimate {
    pub alpha_hat: f64,
    pub k: usize,
    pub ci95: (f64, f64),
}

/// Hill estimator on the `k` largest order statistics.
pub fn hill_tail_index(samples: &[f64], k: usize) -> Result<HillEstimate> {
    if k < 10 {
        return invalid(format!("Hill estimator needs k >= 10, got {k}"));
    }
    if samples.len() < k + 1 {
        return invalid(format!("Hill estimator needs at least {} samples, got {}", k + 1, samples.len()));
    }
    if samples.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return invalid("Hill estimator needs positive finite samples");
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let threshold = v[k];
    let mean_log: f64 = v[..k].iter().map(|x| (x / threshold).ln()).sum::<f64>() / k as f64;
    if !(mean_log > 0.0) {
        return invalid("top order statistics are all tied; tail index undefined");
    }
    let alpha_hat = 1.0 / mean_log;
    let half = 1.96 / (k as f64).sqrt();
    Ok(HillEstimate { alpha_hat, k, ci95: (alpha_hat * (1.0 - half), alpha_hat * (1.0 + half)) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
}

/// Ordinary least squares `y ≈ slope x + intercept`.
pub fn linfit(xs: &[f64], ys: &[f64]) -> Result<LinFit> {
    if xs.len() != ys.len() {
        return invalid("linfit needs equally long inputs");
    }
    if xs.len() < 3 {
        return invalid("linfit needs at least 3 points");
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return invalid("linfit needs at least two distinct x values");
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = (sse / (n - 2.0) / sxx).sqrt();
    Ok(LinFit { slope, intercept, r2, slope_se })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    /// Leave-one-out jackknife SE of the variance; needs at least 3 samples.
    pub se_variance: Option<f64>,
}

pub fn summarize(samples: &[f64]) -> Result<Summary> {
    let n = samples.len();
    if n < 2 {
        return invalid("summary needs at least 2 samples");
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let s1: f64 = centered.iter().sum();
    let s2: f64 = centered.iter().map(|c| c * c).sum();
    let variance = (s2 - s1 * s1 / nf) / (nf - 1.0);
    let se_mean = (variance / nf).sqrt();
    let se_variance = (n >= 3).then(|| {
        let loo: Vec<f64> = centered
            .iter()
            .map(|c| {
                let (t1, t2) = (s1 - c, s2 - c * c);
                (t2 - t1 * t1 / (nf - 1.0)) / (nf - 2.0)
            })
            .collect();
        jackknife_se(&loo)
    });
    Ok(Summary { mean, variance, se_mean, se_variance })
}

/// Jackknife SE from leave-one-out replicates.
pub fn jackknife_se(loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    let m = loo.iter().sum::<f64>() / n;
    ((n - 1.0) / n * loo.iter().map(|v| (v - m) * (v - m)).sum::<f64>()).sqrt()
}

/// Root mean square with its jackknife SE.
pub fn rms_with_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let total: f64 = samples.iter().map(|x| x * x).sum();
    let rms = (total / n as f64).sqrt();
    if n < 2 {
        return (rms, f64::NAN);
    }
    let loo: Vec<f64> = samples.iter().map(|x| ((total - x * x) / (n - 1) as f64).max(0.0).sqrt()).collect();
    (rms, jackknife_se(&loo))
}

/// Wilson score interval for a binomial proportion at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}
