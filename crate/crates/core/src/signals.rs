//! Signal primitives over calendar-aligned series with masks (`None`).
//!
//! All outputs at index `t` depend on inputs at indices `<= t` only. Strategy
//! code applies the one-day trading lag.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ew::{ew_mean_std, ew_std, MIN_OBS};

mod adf;

pub use adf::{adf_pvalue, adf_test, mackinnon_pvalue, schwert_lags, AdfResult};

/// Span of the EW windows behind MACD normalisation and the reversion z-score.
pub const SIGNAL_SPAN: f64 = 63.0;

pub const MOP_LOOKBACKS: [usize; 5] = [5, 21, 63, 126, 252];
pub const BAZ_TIMESCALES: [(usize, usize); 4] = [(4, 12), (8, 24), (16, 48), (32, 96)];
pub const REV_LOOKBACKS: [usize; 4] = [1, 5, 10, 21];
pub const REV_ENTRY: [f64; 3] = [1.5, 1.75, 2.0];
pub const REV_EXIT: [f64; 3] = [0.5, 0.75, 1.0];

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("lookback must be at least one day")]
    ZeroLookback,
    #[error("short timescale {short} must be below long timescale {long}")]
    Timescales { short: usize, long: usize },
    #[error("entry threshold {entry} must exceed exit threshold {exit}")]
    Thresholds { entry: f64, exit: f64 },
    #[error("stationarity test needs at least 30 observations, got {0}")]
    TooShort(usize),
    #[error("regression is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MopParams {
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BazParams {
    pub short: usize,
    pub long: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct RevParams {
    pub k: usize,
    pub entry: f64,
    pub exit: f64,
}

impl MopParams {
    pub fn new(k: usize) -> Result<Self, SignalError> {
        if k == 0 {
            return Err(SignalError::ZeroLookback);
        }
        Ok(Self { k })
    }
}

impl BazParams {
    pub fn new(short: usize, long: usize) -> Result<Self, SignalError> {
        if short == 0 {
            return Err(SignalError::ZeroLookback);
        }
        if short >= long {
            return Err(SignalError::Timescales { short, long });
        }
        Ok(Self { short, long })
    }
}

impl RevParams {
    pub fn new(k: usize, entry: f64, exit: f64) -> Result<Self, SignalError> {
        if k == 0 {
            return Err(SignalError::ZeroLookback);
        }
        if !(entry > exit) {
            return Err(SignalError::Thresholds { entry, exit });
        }
        Ok(Self { k, entry, exit })
    }
}

/// `levels[t] / levels[t - k] - 1`; masked for the first `k` dates and where
/// the base level is missing or zero.
pub fn k_day_return(levels: &[Option<f64>], k: usize) -> Result<Vec<Option<f64>>, SignalError> {
    if k == 0 {
        return Err(SignalError::ZeroLookback);
    }
    Ok((0..levels.len())
        .map(|t| {
            if t < k {
                return None;
            }
            match (levels[t - k], levels[t]) {
                (Some(base), Some(cur)) if base != 0.0 => Some(cur / base - 1.0),
                _ => None,
            }
        })
        .collect())
}

/// `e_t = (1 - α) e_{t-1} + α x_t` with `α = 1 / timescale`, seeded at the
/// first observation. Masked inputs hold the previous value.
pub fn ewma(series: &[Option<f64>], timescale: usize) -> Result<Vec<Option<f64>>, SignalError> {
    if timescale == 0 {
        return Err(SignalError::ZeroLookback);
    }
    let alpha = 1.0 / timescale as f64;
    let mut state: Option<f64> = None;
    Ok(series
        .iter()
        .map(|x| {
            if let Some(v) = x {
                state = Some(match state {
                    None => *v,
                    Some(e) => (1.0 - alpha) * e + alpha * v,
                });
            }
            state
        })
        .collect())
}

/// Crossover of short and long EWMAs, normalised by the 63-day EW standard
/// deviation of the series itself. Zero where that deviation is zero.
pub fn macd(series: &[Option<f64>], params: BazParams) -> Result<Vec<Option<f64>>, SignalError> {
    let params = BazParams::new(params.short, params.long)?;
    let fast = ewma(series, params.short)?;
    let slow = ewma(series, params.long)?;
    let sd = ew_std(series, SIGNAL_SPAN, MIN_OBS);
    Ok((0..series.len())
        .map(|t| match (fast[t], slow[t], sd[t]) {
            (Some(f), Some(s), Some(v)) if v > 0.0 => Some((f - s) / v),
            (Some(_), Some(_), Some(_)) => Some(0.0),
            _ => None,
        })
        .collect())
}

/// `(δ_t - ewm_mean(δ)_t) / ewm_std(δ)_t` over a `span`-day EW window;
/// masked during warm-up and where the deviation is zero.
pub fn ew_zscore(spread: &[Option<f64>], span: f64) -> Vec<Option<f64>> {
    ew_mean_std(spread, span, MIN_OBS)
        .into_iter()
        .zip(spread)
        .map(|(ms, x)| match (ms, x) {
            (Some((m, s)), Some(v)) if s > 0.0 => Some((v - m) / s),
            _ => None,
        })
        .collect()
}

/// Reversion spread `r_open^(k) - r_feature^(k)` on the same date.
pub fn reversion_spread(
    open_levels: &[Option<f64>],
    feature_levels: &[Option<f64>],
    k: usize,
) -> Result<Vec<Option<f64>>, SignalError> {
    let a = k_day_return(open_levels, k)?;
    let b = k_day_return(feature_levels, k)?;
    Ok(a.iter().zip(&b).map(|(x, y)| Some((*x)? - (*y)?)).collect())
}

/// Parameterisation of a rule-based signal.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub enum SignalParams {
    Mop(MopParams),
    Baz(BazParams),
    Rev(RevParams),
}

/// A signal for one `(asset, feature)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries {
    pub asset: usize,
    pub feature: usize,
    pub params: SignalParams,
    pub values: Vec<Option<f64>>,
}

/// Computes the raw signal for a parameterisation from aligned levels.
pub fn signal_values(
    open_levels: &[Option<f64>],
    feature_levels: &[Option<f64>],
    params: SignalParams,
) -> Result<Vec<Option<f64>>, SignalError> {
    match params {
        SignalParams::Mop(p) => k_day_return(feature_levels, p.k),
        SignalParams::Baz(p) => macd(feature_levels, p),
        SignalParams::Rev(p) => Ok(ew_zscore(&reversion_spread(open_levels, feature_levels, p.k)?, SIGNAL_SPAN)),
    }
}

/// Plain helper: wraps every value as observed.
pub fn observed(xs: &[f64]) -> Vec<Option<f64>> {
    xs.iter().copied().map(Some).collect()
}

/// Drops masked entries.
pub fn present(xs: &[Option<f64>]) -> Vec<f64> {
    xs.iter().flatten().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn k_day_return_arithmetic() {
        let r = k_day_return(&observed(&[100.0, 110.0, 121.0]), 1).unwrap();
        assert_eq!(r[0], None);
        assert!(close(r[1].unwrap(), 0.10, 1e-15));
        assert!(close(r[2].unwrap(), 0.10, 1e-15));
        let z = k_day_return(&observed(&[0.0, 1.0]), 1).unwrap();
        assert_eq!(z[1], None);
    }

    #[test]
    fn geometric_growth_has_closed_form_k_return() {
        let g: f64 = 0.003;
        let levels: Vec<f64> = (0..100).map(|t| 50.0 * (1.0 + g).powi(t)).collect();
        let r = k_day_return(&observed(&levels), 21).unwrap();
        let want = (1.0 + g).powi(21) - 1.0;
        for v in &r[21..] {
            assert!(close(v.unwrap(), want, 1e-12));
        }
        assert!(r[..21].iter().all(Option::is_none));
    }

    #[test]
    fn ewma_impulse_response() {
        let mut x = vec![0.0; 20];
        x[5] = 1.0;
        let e = ewma(&observed(&x), 4).unwrap();
        let a = 0.25f64;
        for t in 0..20 {
            let want = if t < 5 { 0.0 } else { a * (1.0 - a).powi(t as i32 - 5) };
            assert!(close(e[t].unwrap(), want, 1e-15), "t={t}");
        }
    }

    #[test]
    fn ewma_fixed_point_and_step() {
        let c = ewma(&observed(&[3.5; 10]), 8).unwrap();
        assert!(c.iter().all(|v| *v == Some(3.5)));
        let mut step = vec![0.0; 5];
        step.extend([1.0; 30]);
        let e = ewma(&observed(&step), 6).unwrap();
        for w in e[5..].windows(2) {
            assert!(w[1].unwrap() > w[0].unwrap() && w[1].unwrap() < 1.0);
        }
        assert!(ewma(&[], 3).unwrap().is_empty());
    }

    #[test]
    fn macd_constant_zero_and_odd() {
        let m = macd(&observed(&[9.0; 40]), BazParams::new(4, 12).unwrap()).unwrap();
        assert!(m[MIN_OBS..].iter().all(|v| *v == Some(0.0)));
        let xs: Vec<f64> = (0..80).map(|t| libm::sin(t as f64 * 0.3) + 0.01 * t as f64).collect();
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        let p = BazParams::new(8, 24).unwrap();
        let a = macd(&observed(&xs), p).unwrap();
        let b = macd(&observed(&neg), p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            match (x, y) {
                (Some(x), Some(y)) => assert!(close(*x, -*y, 1e-12)),
                (None, None) => {}
                _ => panic!("mask mismatch"),
            }
        }
    }

    #[test]
    fn macd_positive_on_rising_line() {
        let xs: Vec<f64> = (0..120).map(|t| 10.0 + 0.5 * t as f64).collect();
        let m = macd(&observed(&xs), BazParams::new(4, 12).unwrap()).unwrap();
        assert!(m[MIN_OBS..].iter().all(|v| v.unwrap() > 0.0));
    }

    #[test]
    fn zscore_constant_is_masked_and_affine_invariant() {
        let z = ew_zscore(&observed(&[2.0; 50]), SIGNAL_SPAN);
        assert!(z.iter().all(Option::is_none));
        let xs: Vec<f64> = (0..90).map(|t| libm::sin(t as f64 * 1.7) + libm::cos(t as f64 * 0.23)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 11.0).collect();
        let a = ew_zscore(&observed(&xs), SIGNAL_SPAN);
        let b = ew_zscore(&observed(&ys), SIGNAL_SPAN);
        for (x, y) in a.iter().zip(&b) {
            if let (Some(x), Some(y)) = (x, y) {
                assert!(close(*x, *y, 1e-9));
            }
        }
    }

    #[test]
    fn parameter_validation() {
        assert_eq!(BazParams::new(12, 4), Err(SignalError::Timescales { short: 12, long: 4 }));
        assert!(RevParams::new(5, 0.75, 1.75).is_err());
        assert_eq!(MopParams::new(0), Err(SignalError::ZeroLookback));
    }
}
