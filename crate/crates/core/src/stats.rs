//! Sample summaries with standard errors.
//!
//! All reductions run over a slice in index order with pairwise summation, so
//! the result depends only on the sample values, never on how they were
//! produced.

use serde::{Deserialize, Serialize};

/// A point estimate with its standard error (zero for exact values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
        }
    }

    pub fn new(value: f64, std_error: f64) -> Self {
        Self { value, std_error }
    }

    /// `|self - target| <= sigmas * std_error + abs_tol`
    pub fn agrees_with(&self, target: f64, sigmas: f64, abs_tol: f64) -> bool {
        (self.value - target).abs() <= sigmas * self.std_error + abs_tol
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Mean, unbiased variance and their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
}

impl SampleSummary {
    pub fn from_slice(xs: &[f64]) -> Self {
        let count = xs.len();
        let m = mean(xs);
        if count < 2 {
            return Self {
                count,
                mean: m,
                variance: f64::NAN,
                se_mean: f64::NAN,
                se_variance: f64::NAN,
            };
        }
        if xs.iter().all(|&x| x == xs[0]) {
            return Self {
                count,
                mean: xs[0],
                variance: 0.0,
                se_mean: 0.0,
                se_variance: 0.0,
            };
        }
        let nf = count as f64;
        let d2: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
        let d4: Vec<f64> = d2.iter().map(|v| v * v).collect();
        let m2 = pairwise_sum(&d2) / nf;
        let m4 = pairwise_sum(&d4) / nf;
        let variance = m2 * nf / (nf - 1.0);
        // Var(s^2) ~ (mu4 - (n-3)/(n-1) sigma^4) / n
        let var_of_var = ((m4 - (nf - 3.0) / (nf - 1.0) * variance * variance) / nf).max(0.0);
        Self {
            count,
            mean: m,
            variance,
            se_mean: (variance / nf).sqrt(),
            se_variance: var_of_var.sqrt(),
        }
    }

    pub fn mean_estimate(&self) -> Estimate {
        Estimate::new(self.mean, self.se_mean)
    }

    pub fn variance_estimate(&self) -> Estimate {
        Estimate::new(self.variance, self.se_variance)
    }
}

/// Fraction of `true` flags with the binomial standard error.
pub fn proportion(flags: &[bool]) -> Estimate {
    if flags.is_empty() {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let n = flags.len() as f64;
    let hits = flags.iter().filter(|&&f| f).count() as f64;
    let p = hits / n;
    Estimate::new(p, (p * (1.0 - p) / n).sqrt())
}

/// Unbiased sample covariance with a plug-in standard error.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Estimate {
    assert_eq!(xs.len(), ys.len());
    let count = xs.len();
    if count < 2 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let nf = count as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let prods: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect();
    let c = pairwise_sum(&prods) / (nf - 1.0);
    let spread = SampleSummary::from_slice(&prods);
    Estimate::new(c, spread.se_mean * nf / (nf - 1.0))
}
