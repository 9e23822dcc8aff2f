//! Small statistical helpers: compensated sums, sample moments, binomial
//! intervals, weighted least squares and the Kolmogorov–Smirnov statistic.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("regressor has no spread")]
    Degenerate,
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::Sum<f64> for KahanSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::new();
        for x in iter {
            k.add(x);
        }
        k
    }
}

pub fn ksum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    xs.into_iter().sum::<KahanSum>().value()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub variance: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - Z95 * self.stderr, self.mean + Z95 * self.stderr)
    }
}

pub fn mean_estimate(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            stderr: f64::NAN,
            variance: f64::NAN,
            n,
        };
    }
    let mean = ksum(xs.iter().copied()) / n as f64;
    let variance = if n > 1 {
        ksum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64
    } else {
        0.0
    };
    MeanEstimate {
        mean,
        stderr: (variance / n as f64).sqrt(),
        variance,
        n,
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Weighted least-squares line `y ≈ intercept + slope · x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub slope_ci: (f64, f64),
    pub r_squared: f64,
    pub n: usize,
}

/// Fit with relative weights `w` (typically inverse variances). The slope
/// interval uses Student t with `n - 2` degrees of freedom and the residual
/// scale, so mis-specified absolute weights do not shrink it.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64], min_points: usize) -> Result<LinearFit, FitError> {
    let n = x.len();
    assert_eq!(n, y.len());
    assert_eq!(n, w.len());
    let need = min_points.max(3);
    if n < need {
        return Err(FitError::TooFewPoints { need, got: n });
    }
    let sw = ksum(w.iter().copied());
    let mx = ksum(x.iter().zip(w).map(|(a, b)| a * b)) / sw;
    let my = ksum(y.iter().zip(w).map(|(a, b)| a * b)) / sw;
    let sxx = ksum(x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)));
    if !(sxx > 0.0) {
        return Err(FitError::Degenerate);
    }
    let sxy = ksum((0..n).map(|i| w[i] * (x[i] - mx) * (y[i] - my)));
    let syy = ksum((0..n).map(|i| w[i] * (y[i] - my) * (y[i] - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = ksum((0..n).map(|i| {
        let r = y[i] - intercept - slope * x[i];
        w[i] * r * r
    }));
    let dof = (n - 2) as f64;
    // normalise weights so that they average to one
    let scale = n as f64 / sw;
    let s2 = rss * scale / dof;
    let slope_stderr = (s2 / (sxx * scale)).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        slope_ci: (slope - t * slope_stderr, slope + t * slope_stderr),
        r_squared,
        n,
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `xs` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}
