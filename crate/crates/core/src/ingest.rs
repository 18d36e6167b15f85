//! Factor-panel assembly: segment linking, calendar alignment, returns,
//! EW volatility standardisation and the tensors consumed by the network.
//!
//! Index convention used across the crate: a panel value at calendar index `t`
//! is the level observed on date `t`, and `returns[t]` is the change from
//! `t - 1` to `t`. A position decided for trade date `t` may only read panel
//! rows `< t`, except for the ex-ante asset volatility which is known at the
//! open of `t`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::Calendar;
use crate::ew::{ew_std, MIN_OBS};
use crate::math::sqrt;
use crate::{TRADING_DAYS, VOL_TARGET};

/// Span of the EW standard deviation used to standardise returns.
pub const STD_SPAN: f64 = 63.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("duplicate date {date} in {asset}/{feature}")]
    DuplicateDate { asset: String, feature: String, date: NaiveDate },
    #[error("dates out of order in {asset}/{feature} at observation {index}")]
    Unordered { asset: String, feature: String, index: usize },
    #[error("non-finite value in {asset}/{feature} on {date}")]
    NonFinite { asset: String, feature: String, date: NaiveDate },
    #[error("segment {index} ends on a zero datum; cannot rescale")]
    DegenerateScale { index: usize },
    #[error("segment {index} does not overlap its successor on exactly one roll date")]
    Alignment { index: usize },
    #[error("no segments to link")]
    Empty,
    #[error("feature {feature} missing entirely for asset {asset}")]
    MissingFeature { asset: String, feature: String },
    #[error("duplicate series for {asset}/{feature} from the same source")]
    DuplicateSeries { asset: String, feature: String },
    #[error("window ending at index {end} needs {needed} rows of history and one day ahead (calendar has {available})")]
    Window { end: usize, needed: usize, available: usize },
    #[error("panel has no feature named {0}")]
    UnknownFeature(String),
    #[error("levels length {got} does not match {expected}")]
    Shape { got: usize, expected: usize },
}

/// Data vendor; declaration order is the preference order when two sources
/// provide the same feature on the same date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    /// CoinMarketCap prices and volume.
    Cmc,
    /// BitInfoCharts alternative data.
    Bic,
    /// Blockchair alternative data.
    Bc,
    /// Google Trends, linked from 90-day downloads.
    Gt,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Source::Cmc => "CMC",
            Source::Bic => "BIC",
            Source::Bc => "BC",
            Source::Gt => "GT",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CMC" => Some(Source::Cmc),
            "BIC" => Some(Source::Bic),
            "BC" => Some(Source::Bc),
            "GT" => Some(Source::Gt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub asset: String,
    pub feature: String,
    pub source: Source,
    pub observations: Vec<(NaiveDate, f64)>,
}

impl RawSeries {
    /// Validates ordering, uniqueness and finiteness.
    pub fn new(
        asset: impl Into<String>,
        feature: impl Into<String>,
        source: Source,
        observations: Vec<(NaiveDate, f64)>,
    ) -> Result<Self, IngestError> {
        let s = Self { asset: asset.into(), feature: feature.into(), source, observations };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        for (i, w) in self.observations.windows(2).enumerate() {
            if w[0].0 == w[1].0 {
                return Err(IngestError::DuplicateDate {
                    asset: self.asset.clone(),
                    feature: self.feature.clone(),
                    date: w[1].0,
                });
            }
            if w[0].0 > w[1].0 {
                return Err(IngestError::Unordered {
                    asset: self.asset.clone(),
                    feature: self.feature.clone(),
                    index: i + 1,
                });
            }
        }
        if let Some((d, _)) = self.observations.iter().find(|(_, v)| !v.is_finite()) {
            return Err(IngestError::NonFinite {
                asset: self.asset.clone(),
                feature: self.feature.clone(),
                date: *d,
            });
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|(_, v)| *v).collect()
    }
}

/// Links consecutive segments that share exactly one roll date by backwards
/// proportional adjustment: every older segment is multiplied by `g2 / g1`,
/// where `g1` is its own datum on the roll date and `g2` the (already
/// adjusted) datum of the newer segment on that date. The newest segment is
/// left untouched and one-day fractional changes inside every segment are
/// preserved.
pub fn link_segments(segments: &[RawSeries]) -> Result<RawSeries, IngestError> {
    let newest = segments.last().ok_or(IngestError::Empty)?;
    let mut linked: Vec<(NaiveDate, f64)> = newest.observations.clone();
    for index in (0..segments.len() - 1).rev() {
        let seg = &segments[index].observations;
        let (roll, g1) = *seg.last().ok_or(IngestError::Alignment { index })?;
        let (next_first, g2) = *linked.first().ok_or(IngestError::Alignment { index })?;
        if roll != next_first {
            return Err(IngestError::Alignment { index });
        }
        if g1 == 0.0 {
            return Err(IngestError::DegenerateScale { index });
        }
        let ratio = g2 / g1;
        let mut older: Vec<(NaiveDate, f64)> =
            seg[..seg.len() - 1].iter().map(|(d, v)| (*d, v * ratio)).collect();
        older.extend_from_slice(&linked);
        linked = older;
    }
    RawSeries::new(newest.asset.clone(), newest.feature.clone(), newest.source, linked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MissingPolicy {
    /// Allow a declared feature to be absent for an asset; it is then fully
    /// masked and contributes neutral zeros.
    pub neutral_fill: bool,
}

/// Calendar-aligned levels, returns and 63-day EW volatility per
/// `(date, asset, feature)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    calendar: Calendar,
    assets: Vec<String>,
    features: Vec<String>,
    levels: Vec<Option<f64>>,
    returns: Vec<Option<f64>>,
    std63: Vec<Option<f64>>,
}

impl FactorPanel {
    /// Builds a panel from already-aligned levels (`t`-major, then asset, then
    /// feature). Interior gaps are forward-filled; leading gaps stay masked.
    pub fn from_levels(
        calendar: Calendar,
        assets: Vec<String>,
        features: Vec<String>,
        mut levels: Vec<Option<f64>>,
    ) -> Result<Self, IngestError> {
        let (n, na, nf) = (calendar.len(), assets.len(), features.len());
        if levels.len() != n * na * nf {
            return Err(IngestError::Shape { got: levels.len(), expected: n * na * nf });
        }
        let idx = |t: usize, i: usize, j: usize| (t * na + i) * nf + j;
        let mut returns = vec![None; levels.len()];
        let mut std63 = vec![None; levels.len()];
        for i in 0..na {
            for j in 0..nf {
                let mut last = None;
                for t in 0..n {
                    match levels[idx(t, i, j)] {
                        Some(v) => last = Some(v),
                        None => levels[idx(t, i, j)] = last,
                    }
                }
                let mut col = vec![None; n];
                for t in 1..n {
                    if let (Some(prev), Some(cur)) = (levels[idx(t - 1, i, j)], levels[idx(t, i, j)]) {
                        if prev != 0.0 {
                            col[t] = Some(cur / prev - 1.0);
                        }
                    }
                }
                let sd = ew_std(&col, STD_SPAN, MIN_OBS);
                for t in 0..n {
                    returns[idx(t, i, j)] = col[t];
                    std63[idx(t, i, j)] = sd[t];
                }
            }
        }
        Ok(Self { calendar, assets, features, levels, returns, std63 })
    }

    fn idx(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.assets.len() + i) * self.features.len() + j
    }

    pub fn calendar(&self) -> &Calendar {
        &self.calendar
    }

    pub fn len(&self) -> usize {
        self.calendar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calendar.is_empty()
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize, IngestError> {
        self.features
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| IngestError::UnknownFeature(name.into()))
    }

    pub fn level(&self, t: usize, i: usize, j: usize) -> Option<f64> {
        self.levels[self.idx(t, i, j)]
    }

    pub fn ret(&self, t: usize, i: usize, j: usize) -> Option<f64> {
        self.returns[self.idx(t, i, j)]
    }

    /// Daily (not annualised) 63-day EW standard deviation of returns.
    pub fn std63(&self, t: usize, i: usize, j: usize) -> Option<f64> {
        self.std63[self.idx(t, i, j)]
    }

    pub fn available(&self, t: usize, i: usize, j: usize) -> bool {
        self.level(t, i, j).is_some()
    }

    /// `return / std63`, zero when either is masked or the std is zero.
    pub fn standardized(&self, t: usize, i: usize, j: usize) -> f64 {
        match (self.ret(t, i, j), self.std63(t, i, j)) {
            (Some(r), Some(s)) if s > 0.0 => r / s,
            _ => 0.0,
        }
    }

    pub fn level_column(&self, i: usize, j: usize) -> Vec<Option<f64>> {
        (0..self.len()).map(|t| self.level(t, i, j)).collect()
    }

    pub fn return_column(&self, i: usize, j: usize) -> Vec<Option<f64>> {
        (0..self.len()).map(|t| self.ret(t, i, j)).collect()
    }

    /// First available calendar index per `(asset, feature)`.
    pub fn first_available(&self, i: usize, j: usize) -> Option<usize> {
        (0..self.len()).find(|&t| self.available(t, i, j))
    }

    /// The panel restricted to its first `len` dates. Every derived quantity
    /// is causal, so the prefix equals the full panel's rows.
    pub fn truncated(&self, len: usize) -> Self {
        let len = len.min(self.len());
        let cut = len * self.assets.len() * self.features.len();
        Self {
            calendar: self.calendar.truncated(len),
            assets: self.assets.clone(),
            features: self.features.clone(),
            levels: self.levels[..cut].to_vec(),
            returns: self.returns[..cut].to_vec(),
            std63: self.std63[..cut].to_vec(),
        }
    }

    pub fn levels(&self) -> &[Option<f64>] {
        &self.levels
    }
}

/// Aligns raw series onto `calendar`. Where several sources provide one
/// `(asset, feature)`, the earliest-declared [`Source`] wins date by date.
/// Results do not depend on the order of `series`.
pub fn build_panel(
    series: &[RawSeries],
    calendar: Calendar,
    assets: &[String],
    features: &[String],
    policy: MissingPolicy,
) -> Result<FactorPanel, IngestError> {
    let (n, na, nf) = (calendar.len(), assets.len(), features.len());
    let mut levels = vec![None; n * na * nf];
    for (i, asset) in assets.iter().enumerate() {
        for (j, feature) in features.iter().enumerate() {
            let mut matching: Vec<&RawSeries> =
                series.iter().filter(|s| &s.asset == asset && &s.feature == feature).collect();
            if matching.is_empty() {
                if policy.neutral_fill {
                    continue;
                }
                return Err(IngestError::MissingFeature { asset: asset.clone(), feature: feature.clone() });
            }
            matching.sort_by_key(|s| s.source);
            if matching.windows(2).any(|w| w[0].source == w[1].source) {
                return Err(IngestError::DuplicateSeries { asset: asset.clone(), feature: feature.clone() });
            }
            // lowest priority first so preferred sources overwrite
            for s in matching.iter().rev() {
                s.validate()?;
                for (d, v) in &s.observations {
                    if let Some(t) = calendar.index_of(*d) {
                        levels[(t * na + i) * nf + j] = Some(*v);
                    }
                }
            }
        }
    }
    FactorPanel::from_levels(calendar, assets.to_vec(), features.to_vec(), levels)
}

/// Network tensors for one window of `len` rows.
///
/// Row `r` holds the standardised returns dated `end - len + r` (so the last
/// row is the move from `end - 2` to `end - 1`) and is used to size positions
/// for trade date `end - len + r + 1`. `y1` is the open-price return realised
/// over the following day scaled by `y2 = σ_tgt / σ_open`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInputs {
    pub len: usize,
    pub n_assets: usize,
    pub n_features: usize,
    /// Decision index of the last row.
    pub end: usize,
    /// `len × n_assets × n_features`.
    pub x: Vec<f64>,
    /// `len × n_assets`.
    pub y1: Vec<f64>,
    /// `len × n_assets`.
    pub y2: Vec<f64>,
}

impl ModelInputs {
    pub fn decision_index(&self, row: usize) -> usize {
        self.end + 1 + row - self.len
    }
}

/// Annualised ex-ante volatility of asset `i`'s open price at `t`.
pub fn asset_vol(panel: &FactorPanel, t: usize, i: usize, open: usize) -> Option<f64> {
    panel.std63(t, i, open).map(|s| s * sqrt(TRADING_DAYS)).filter(|s| *s > 0.0)
}

/// Standardised returns only (no targets); `end` may be one past the last date.
pub fn model_features(panel: &FactorPanel, end: usize, len: usize) -> Result<Vec<f64>, IngestError> {
    if end < len + 1 || end > panel.len() {
        return Err(IngestError::Window { end, needed: len + 1, available: panel.len() });
    }
    let (na, nf) = (panel.n_assets(), panel.n_features());
    let mut x = Vec::with_capacity(len * na * nf);
    for r in 0..len {
        let d = end - len + r;
        for i in 0..na {
            for j in 0..nf {
                x.push(panel.standardized(d, i, j));
            }
        }
    }
    Ok(x)
}

pub fn make_model_inputs(
    panel: &FactorPanel,
    end: usize,
    len: usize,
    open: usize,
) -> Result<ModelInputs, IngestError> {
    if end < len + 1 || end + 1 >= panel.len() {
        return Err(IngestError::Window { end, needed: len + 1, available: panel.len() });
    }
    let x = model_features(panel, end, len)?;
    let na = panel.n_assets();
    let mut y1 = Vec::with_capacity(len * na);
    let mut y2 = Vec::with_capacity(len * na);
    for r in 0..len {
        let decision = end - len + r + 1;
        for i in 0..na {
            let scale = asset_vol(panel, decision, i, open).map_or(0.0, |s| VOL_TARGET / s);
            let fwd = panel.ret(decision + 1, i, open).unwrap_or(0.0);
            y2.push(scale);
            y1.push(fwd * scale);
        }
    }
    Ok(ModelInputs { len, n_assets: na, n_features: panel.n_features(), end, x, y1, y2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn seg(start: NaiveDate, vals: &[f64]) -> RawSeries {
        let obs = vals
            .iter()
            .enumerate()
            .map(|(k, v)| (start + chrono::Days::new(k as u64), *v))
            .collect();
        RawSeries::new("BTC", "google trends", Source::Gt, obs).unwrap()
    }

    #[test]
    fn equal_roll_data_concatenate() {
        let a = seg(d(2020, 1, 1), &[10.0, 20.0, 40.0]);
        let b = seg(d(2020, 1, 3), &[40.0, 30.0]);
        let l = link_segments(&[a, b]).unwrap();
        assert_eq!(l.values(), vec![10.0, 20.0, 40.0, 30.0]);
    }

    #[test]
    fn older_segment_doubles_when_new_roll_datum_is_twice() {
        let a = seg(d(2020, 1, 1), &[25.0, 50.0]);
        let b = seg(d(2020, 1, 2), &[100.0, 80.0]);
        let l = link_segments(&[a, b]).unwrap();
        assert_eq!(l.values(), vec![50.0, 100.0, 80.0]);
    }

    #[test]
    fn zero_roll_datum_is_degenerate() {
        let a = seg(d(2020, 1, 1), &[5.0, 0.0]);
        let b = seg(d(2020, 1, 2), &[3.0, 4.0]);
        assert_eq!(link_segments(&[a, b]), Err(IngestError::DegenerateScale { index: 0 }));
    }

    #[test]
    fn missing_overlap_is_rejected() {
        let a = seg(d(2020, 1, 1), &[5.0, 6.0]);
        let b = seg(d(2020, 1, 5), &[3.0, 4.0]);
        assert_eq!(link_segments(&[a, b]), Err(IngestError::Alignment { index: 0 }));
    }

    #[test]
    fn duplicate_dates_fail_integrity() {
        let r = RawSeries::new("BTC", "open", Source::Cmc, vec![(d(2021, 1, 1), 1.0), (d(2021, 1, 1), 2.0)]);
        assert!(matches!(r, Err(IngestError::DuplicateDate { .. })));
    }

    fn one(levels: Vec<Option<f64>>) -> FactorPanel {
        let cal = Calendar::daily(d(2020, 1, 1), d(2020, 1, 1) + chrono::Days::new(levels.len() as u64 - 1)).unwrap();
        FactorPanel::from_levels(cal, vec!["BTC".to_string()], vec!["open".to_string()], levels).unwrap()
    }

    #[test]
    fn simple_returns() {
        let p = one(vec![Some(100.0), Some(110.0), Some(99.0)]);
        assert_eq!(p.ret(0, 0, 0), None);
        assert!((p.ret(1, 0, 0).unwrap() - 0.10).abs() < 1e-15);
        assert!((p.ret(2, 0, 0).unwrap() + 0.10).abs() < 1e-15);
    }

    #[test]
    fn constant_levels_standardise_to_zero() {
        let p = one(vec![Some(7.0); 30]);
        for t in 0..30 {
            assert_eq!(p.standardized(t, 0, 0), 0.0);
        }
        assert_eq!(p.std63(29, 0, 0), Some(0.0));
    }

    #[test]
    fn interior_gaps_forward_fill_and_leading_gaps_mask() {
        let p = one(vec![None, None, Some(1.0), None, Some(2.0)]);
        assert_eq!(p.level(0, 0, 0), None);
        assert_eq!(p.level(3, 0, 0), Some(1.0));
        assert_eq!(p.ret(3, 0, 0), Some(0.0));
        assert_eq!(p.first_available(0, 0), Some(2));
    }

    #[test]
    fn missing_feature_is_a_configuration_error_unless_neutral() {
        let cal = Calendar::daily(d(2020, 1, 1), d(2020, 1, 3)).unwrap();
        let s = RawSeries::new("BTC", "open", Source::Cmc, vec![(d(2020, 1, 1), 1.0)]).unwrap();
        let assets = vec!["BTC".to_string()];
        let feats = vec!["open".to_string(), "hashrate".to_string()];
        let e = build_panel(&[s.clone()], cal.clone(), &assets, &feats, MissingPolicy::default());
        assert!(matches!(e, Err(IngestError::MissingFeature { .. })));
        let p = build_panel(&[s], cal, &assets, &feats, MissingPolicy { neutral_fill: true }).unwrap();
        assert_eq!(p.level(2, 0, 1), None);
        assert_eq!(p.standardized(2, 0, 1), 0.0);
    }

    #[test]
    fn preferred_source_wins_and_fallback_fills() {
        let cal = Calendar::daily(d(2020, 1, 1), d(2020, 1, 3)).unwrap();
        let bic = RawSeries::new("ZEC", "transactions", Source::Bic, vec![(d(2020, 1, 2), 5.0)]).unwrap();
        let bc = RawSeries::new("ZEC", "transactions", Source::Bc, vec![(d(2020, 1, 1), 1.0), (d(2020, 1, 2), 9.0)]).unwrap();
        let p = build_panel(&[bc, bic], cal, &["ZEC".into()], &["transactions".into()], MissingPolicy::default()).unwrap();
        assert_eq!(p.level(0, 0, 0), Some(1.0));
        assert_eq!(p.level(1, 0, 0), Some(5.0));
    }

    #[test]
    fn window_requires_history_and_one_day_ahead() {
        let p = one((0..20).map(|k| Some(100.0 + k as f64)).collect());
        assert!(make_model_inputs(&p, 5, 5, 0).is_err());
        assert!(make_model_inputs(&p, 6, 5, 0).is_ok());
        assert!(make_model_inputs(&p, 19, 5, 0).is_err());
    }
}
