//! Small statistics toolbox used by the estimators: sample moments, Wilson
//! intervals, quantiles, least-squares fits and batch means.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// One-sided 95% normal quantile.
pub const Z95_ONE_SIDED: f64 = 1.644_853_626_951_472_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - Z95 * self.se, self.mean + Z95 * self.se)
    }

    /// `|mean - target| <= z se`.
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.mean - target).abs() <= z * self.se
    }

    /// Margin of `|mean - target| <= max(z se, rel |target|)`; the relative
    /// floor covers estimates with no sampling noise, whose only error is
    /// discretisation.
    pub fn oracle_margin(&self, target: f64, z: f64, rel: f64) -> f64 {
        (z * self.se).max(rel * target.abs()) - (self.mean - target).abs()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn mean_estimate(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    let se = if n > 1 { (variance(xs) / n as f64).sqrt() } else { f64::NAN };
    MeanEstimate { mean: mean(xs), se, n }
}

/// Sample variance with a delta-method standard error, `(m4 - s^4) / n`.
pub fn variance_estimate(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    let m = mean(xs);
    let s2 = variance(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
    let se = ((m4 - s2 * s2).max(0.0) / n as f64).sqrt();
    MeanEstimate { mean: s2, se, n }
}

/// Wilson score interval for `k` successes in `n` trials at normal quantile `z`.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Linear-interpolated quantile of an unsorted sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    v[lo] * (1.0 - w) + v[hi] * w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope from the residuals (NaN with two points).
    pub slope_se: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    let slope_se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    LinearFit { slope, intercept, r2, slope_se }
}

/// Batch-means estimate of the mean of a correlated series.
pub fn batch_means(xs: &[f64], batches: usize) -> MeanEstimate {
    let b = batches.max(2).min(xs.len());
    let len = xs.len() / b;
    let means: Vec<f64> = (0..b).map(|i| mean(&xs[i * len..(i + 1) * len])).collect();
    let est = mean_estimate(&means);
    MeanEstimate { mean: est.mean, se: est.se, n: xs.len() }
}

/// Percentile interval from a set of bootstrap replicates.
pub fn percentile_interval(mut reps: Vec<f64>, level: f64) -> (f64, f64) {
    reps.retain(|x| x.is_finite());
    reps.sort_by(|a, b| a.total_cmp(b));
    let a = (1.0 - level) / 2.0;
    (quantile_sorted(&reps, a), quantile_sorted(&reps, 1.0 - a))
}
