//! Performance statistics for daily return series.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{central_moments, mean, norm_cdf, norm_ppf, pearson, ranks, sample_std, sqrt};
use crate::portfolio::PortfolioSeries;
use crate::TRADING_DAYS;

/// PSR samples shorter than this are flagged.
pub const PSR_MIN_SAMPLE: usize = 30;
pub const PSR_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum MetricError {
    #[error("series needs at least {0} observations")]
    TooShort(usize),
    #[error("zero standard deviation")]
    ZeroStd,
    #[error("series lengths differ")]
    Length,
    #[error("non-finite sample moments")]
    NonFinite,
}

fn degenerate_std(xs: &[f64], sd: f64) -> bool {
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    !(sd > 1e-12 * scale)
}

fn need(xs: &[f64], n: usize) -> Result<(), MetricError> {
    if xs.len() < n {
        return Err(MetricError::TooShort(n));
    }
    Ok(())
}

/// √252 · mean / std (ddof 1).
pub fn sharpe(xs: &[f64]) -> Result<f64, MetricError> {
    need(xs, 2)?;
    let sd = sample_std(xs);
    if degenerate_std(xs, sd) {
        return Err(MetricError::ZeroStd);
    }
    Ok(sqrt(TRADING_DAYS) * mean(xs) / sd)
}

/// Root mean square of the negative part; `+inf` ratio when there are no losses.
pub fn sortino(xs: &[f64]) -> Result<f64, MetricError> {
    need(xs, 1)?;
    let dd = sqrt(xs.iter().map(|r| r.min(0.0) * r.min(0.0)).sum::<f64>() / xs.len() as f64);
    let m = mean(xs);
    if dd == 0.0 {
        return if m > 0.0 { Ok(f64::INFINITY) } else { Err(MetricError::ZeroStd) };
    }
    Ok(sqrt(TRADING_DAYS) * m / dd)
}

/// Arithmetic mean × 252.
pub fn mar(xs: &[f64]) -> f64 {
    mean(xs) * TRADING_DAYS
}

pub fn vol(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    sample_std(xs) * sqrt(TRADING_DAYS)
}

/// Largest peak-to-trough fall of `Π(1 + r)`, starting from equity 1.
pub fn max_drawdown(xs: &[f64]) -> f64 {
    let mut equity = 1.0;
    let mut peak = 1.0;
    let mut worst: f64 = 0.0;
    for r in xs {
        equity *= 1.0 + r;
        if equity > peak {
            peak = equity;
        }
        worst = worst.max(1.0 - equity / peak);
    }
    worst.clamp(0.0, 1.0)
}

/// `(MDD, MDD / VOL)`.
pub fn mdd(xs: &[f64]) -> (f64, f64) {
    let m = max_drawdown(xs);
    let v = vol(xs);
    let sigma = if v > 0.0 { m / v } else { f64::NAN };
    (m, sigma)
}

/// MAR / MDD; `+inf` when the equity never falls.
pub fn calmar(xs: &[f64]) -> f64 {
    let m = max_drawdown(xs);
    if m == 0.0 {
        return f64::INFINITY;
    }
    mar(xs) / m
}

pub fn hit_rate(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().filter(|r| **r > 0.0).count() as f64 / xs.len() as f64
}

/// Mean gain over mean loss magnitude; `+inf` with no losing day.
pub fn pnl_ratio(xs: &[f64]) -> f64 {
    let gains: Vec<f64> = xs.iter().copied().filter(|r| *r > 0.0).collect();
    let losses: Vec<f64> = xs.iter().copied().filter(|r| *r < 0.0).collect();
    if losses.is_empty() {
        return f64::INFINITY;
    }
    if gains.is_empty() {
        return 0.0;
    }
    mean(&gains) / mean(&losses).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson: f64,
    pub spearman: f64,
}

pub fn correlation(a: &[f64], b: &[f64]) -> Result<Correlation, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::Length);
    }
    need(a, 2)?;
    Ok(Correlation { pearson: pearson(a, b), spearman: pearson(&ranks(a), &ranks(b)) })
}

/// Breakeven cost in bps for a fully scaled book: total gross PnL over total
/// turnover. `±inf` when nothing trades.
pub fn breakeven_cost(series: &PortfolioSeries) -> f64 {
    let turnover = series.total_turnover();
    let gross = series.total_gross();
    if turnover == 0.0 {
        return if gross == 0.0 { f64::NAN } else { gross.signum() * f64::INFINITY };
    }
    gross / turnover * 1e4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpeMoments {
    pub n: usize,
    /// Daily, ddof 1.
    pub sharpe: f64,
    pub skew: f64,
    /// Non-excess (normal = 3).
    pub kurtosis: f64,
}

impl SharpeMoments {
    pub fn from_returns(xs: &[f64]) -> Result<Self, MetricError> {
        need(xs, 2)?;
        let sd = sample_std(xs);
        if !(sd > 0.0) {
            return Err(MetricError::ZeroStd);
        }
        let (m2, m3, m4) = central_moments(xs);
        let skew = m3 / (m2 * sqrt(m2));
        let kurtosis = m4 / (m2 * m2);
        if !skew.is_finite() || !kurtosis.is_finite() {
            return Err(MetricError::NonFinite);
        }
        Ok(Self { n: xs.len(), sharpe: mean(xs) / sd, skew, kurtosis })
    }

    fn dispersion(&self) -> f64 {
        1.0 - self.skew * self.sharpe + (self.kurtosis - 1.0) / 4.0 * self.sharpe * self.sharpe
    }

    /// PSR at sample length `n` with these moments.
    pub fn psr_at(&self, n: usize, benchmark: f64) -> f64 {
        let d = self.dispersion();
        if n < 2 || !(d > 0.0) {
            return f64::NAN;
        }
        norm_cdf((self.sharpe - benchmark) * sqrt((n - 1) as f64) / sqrt(d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psr {
    pub probability: f64,
    pub insufficient_sample: bool,
}

/// Probabilistic Sharpe ratio against a daily benchmark Sharpe.
pub fn psr(xs: &[f64], benchmark: f64) -> Result<Psr, MetricError> {
    let m = SharpeMoments::from_returns(xs)?;
    let p = m.psr_at(m.n, benchmark);
    if !p.is_finite() {
        return Err(MetricError::NonFinite);
    }
    Ok(Psr { probability: p, insufficient_sample: m.n < PSR_MIN_SAMPLE })
}

/// Smallest sample length whose PSR reaches `confidence`; `None` when the
/// observed Sharpe does not beat the benchmark.
pub fn mtr(xs: &[f64], benchmark: f64, confidence: f64) -> Result<Option<u64>, MetricError> {
    let m = SharpeMoments::from_returns(xs)?;
    Ok(mtr_from_moments(&m, benchmark, confidence))
}

pub fn mtr_from_moments(m: &SharpeMoments, benchmark: f64, confidence: f64) -> Option<u64> {
    let edge = m.sharpe - benchmark;
    let d = m.dispersion();
    if !(edge > 0.0) || !(d > 0.0) || !(confidence > 0.5 && confidence < 1.0) {
        return None;
    }
    let z = norm_ppf(confidence);
    let approx = 1.0 + d * (z / edge) * (z / edge);
    if !approx.is_finite() || approx > 1e15 {
        return None;
    }
    let mut n = (libm::ceil(approx) as u64).max(2);
    while n > 2 && m.psr_at((n - 1) as usize, benchmark) >= confidence {
        n -= 1;
    }
    while m.psr_at(n as usize, benchmark) < confidence {
        n += 1;
    }
    Some(n)
}

/// One row of the results table. Percentages are stored as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mar: f64,
    pub hr: f64,
    pub pnl: f64,
    pub sharpe: f64,
    pub sortino: f64,
    pub calmar: f64,
    pub vol: f64,
    pub mdd: f64,
    pub mdd_sigma: f64,
    pub corr_pearson: Option<f64>,
    pub corr_spearman: Option<f64>,
    pub brk_bps: Option<f64>,
    pub psr: f64,
    pub psr_insufficient: bool,
    pub mtr_days: Option<u64>,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 13] =
        ["MAR", "HR", "PNL", "Sharpe", "Sortino", "Calmar", "VOL", "MDD", "CORR", "BRK", "PSR", "MTR", "CORR_spearman"];

    /// Net returns are scored; `series` supplies BRK when given.
    pub fn compute(net: &[f64], series: Option<&PortfolioSeries>, benchmark: Option<&[f64]>) -> Result<Self, MetricError> {
        let (mdd_pct, mdd_sigma) = mdd(net);
        let corr = match benchmark {
            Some(b) => Some(correlation(net, b)?),
            None => None,
        };
        let p = psr(net, 0.0)?;
        Ok(Self {
            mar: mar(net),
            hr: hit_rate(net),
            pnl: pnl_ratio(net),
            sharpe: sharpe(net)?,
            sortino: sortino(net)?,
            calmar: calmar(net),
            vol: vol(net),
            mdd: mdd_pct,
            mdd_sigma,
            corr_pearson: corr.map(|c| c.pearson),
            corr_spearman: corr.map(|c| c.spearman),
            brk_bps: series.map(breakeven_cost),
            psr: p.probability,
            psr_insufficient: p.insufficient_sample,
            mtr_days: mtr(net, 0.0, PSR_CONFIDENCE)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn constant_series_has_no_sharpe() {
        assert_eq!(sharpe(&[0.01; 20]), Err(MetricError::ZeroStd));
    }

    #[test]
    fn alternating_series() {
        let xs: Vec<f64> = (0..100).map(|k| if k % 2 == 0 { 0.01 } else { -0.01 }).collect();
        assert!(sharpe(&xs).unwrap().abs() < 1e-12);
        assert_eq!(hit_rate(&xs), 0.5);
        assert!((pnl_ratio(&xs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drawdown_half() {
        assert!((max_drawdown(&[-0.5, 0.5]) - 0.5).abs() < 1e-15);
        assert_eq!(max_drawdown(&[0.01, 0.02]), 0.0);
        assert!(calmar(&[0.01, 0.02]).is_infinite());
    }

    #[test]
    fn all_gains() {
        assert_eq!(hit_rate(&[0.1, 0.2]), 1.0);
        assert!(pnl_ratio(&[0.1, 0.2]).is_infinite());
    }

    #[test]
    fn spearman_sees_monotone_maps() {
        let a: Vec<f64> = (1..50).map(|k| k as f64 / 10.0).collect();
        let b: Vec<f64> = a.iter().map(|x| libm::exp(*x)).collect();
        let c = correlation(&a, &b).unwrap();
        assert!((c.spearman - 1.0).abs() < 1e-12);
        assert!(c.pearson < 0.99);
    }

    #[test]
    fn psr_at_benchmark_is_half() {
        let xs = vec![0.01, -0.02, 0.03, 0.0, 0.015, -0.01, 0.02, -0.005];
        let m = SharpeMoments::from_returns(&xs).unwrap();
        let p = psr(&xs, m.sharpe).unwrap();
        assert_eq!(p.probability, 0.5);
        assert!(p.insufficient_sample);
    }

    #[test]
    fn mtr_is_minimal() {
        let m = SharpeMoments { n: 500, sharpe: 0.08, skew: -0.3, kurtosis: 5.0 };
        let n = mtr_from_moments(&m, 0.0, 0.99).unwrap() as usize;
        assert!(m.psr_at(n, 0.0) >= 0.99);
        assert!(m.psr_at(n - 1, 0.0) < 0.99);
        assert_eq!(mtr_from_moments(&SharpeMoments { sharpe: -0.01, ..m }, 0.0, 0.99), None);
    }
}
