//! Exponentially-weighted statistics.
//!
//! Weights follow the "adjusted" convention: the observation `k` steps back
//! carries weight `(1 - alpha)^k`, and the variance is bias-corrected with the
//! effective-sample factor `(Σw)² / ((Σw)² - Σw²)`. Missing inputs (`None`) are
//! skipped without decaying the state.

use alloc::vec::Vec;

use crate::math::sqrt;

/// Minimum observations before a span-63 estimate is reported.
pub const MIN_OBS: usize = 10;

pub fn span_alpha(span: f64) -> f64 {
    2.0 / (span + 1.0)
}

/// Running weighted mean and covariance of one stream.
#[derive(Debug, Clone)]
pub struct EwMoments {
    alpha: f64,
    mean: f64,
    cov: f64,
    sum_wt: f64,
    sum_wt2: f64,
    old_wt: f64,
    nobs: usize,
}

impl EwMoments {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, mean: 0.0, cov: 0.0, sum_wt: 0.0, sum_wt2: 0.0, old_wt: 0.0, nobs: 0 }
    }

    pub fn with_span(span: f64) -> Self {
        Self::new(span_alpha(span))
    }

    pub fn push(&mut self, x: f64) {
        if self.nobs == 0 {
            self.mean = x;
            self.cov = 0.0;
            self.sum_wt = 1.0;
            self.sum_wt2 = 1.0;
            self.old_wt = 1.0;
            self.nobs = 1;
            return;
        }
        let decay = 1.0 - self.alpha;
        self.nobs += 1;
        self.old_wt *= decay;
        self.sum_wt *= decay;
        self.sum_wt2 *= decay * decay;
        let old_mean = self.mean;
        if self.mean != x {
            self.mean = (self.old_wt * old_mean + x) / (self.old_wt + 1.0);
        }
        let d_old = old_mean - self.mean;
        let d_new = x - self.mean;
        self.cov = (self.old_wt * (self.cov + d_old * d_old) + d_new * d_new) / (self.old_wt + 1.0);
        self.sum_wt += 1.0;
        self.sum_wt2 += 1.0;
        self.old_wt += 1.0;
    }

    pub fn nobs(&self) -> usize {
        self.nobs
    }

    pub fn mean(&self) -> Option<f64> {
        (self.nobs > 0).then_some(self.mean)
    }

    /// Bias-corrected variance; `None` with fewer than two observations.
    pub fn variance(&self) -> Option<f64> {
        let num = self.sum_wt * self.sum_wt;
        let den = num - self.sum_wt2;
        if self.nobs < 2 || den <= 0.0 {
            return None;
        }
        Some((num / den * self.cov).max(0.0))
    }

    pub fn std(&self) -> Option<f64> {
        self.variance().map(sqrt)
    }
}

/// Running EW standard deviation of `xs`, reported once `min_obs` values were seen.
pub fn ew_std(xs: &[Option<f64>], span: f64, min_obs: usize) -> Vec<Option<f64>> {
    let mut st = EwMoments::with_span(span);
    xs.iter()
        .map(|x| {
            if let Some(v) = x {
                st.push(*v);
            }
            if st.nobs() >= min_obs.max(2) {
                st.std()
            } else {
                None
            }
        })
        .collect()
}

/// Running EW mean and standard deviation, both gated by `min_obs`.
pub fn ew_mean_std(xs: &[Option<f64>], span: f64, min_obs: usize) -> Vec<Option<(f64, f64)>> {
    let mut st = EwMoments::with_span(span);
    xs.iter()
        .map(|x| {
            if let Some(v) = x {
                st.push(*v);
            }
            if st.nobs() >= min_obs.max(2) {
                Some((st.mean()?, st.std()?))
            } else {
                None
            }
        })
        .collect()
}
