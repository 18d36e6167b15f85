//! Rule-based position sizing (MOP, BAZ, REV, Long-only), parameter grids,
//! in-sample selection and the CMB equal-risk combination.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::Frame;
use crate::ingest::FactorPanel;
use crate::math::sign;
use crate::portfolio::{combine_equal_risk, PortfolioError, PortfolioSeries};
use crate::signals::{
    adf_test, present, reversion_spread, signal_values, BazParams, MopParams, RevParams, SignalError, SignalParams,
    BAZ_TIMESCALES, MOP_LOOKBACKS, REV_ENTRY, REV_EXIT, REV_LOOKBACKS,
};

/// ADF p-value a reversion spread must reach to be traded.
pub const STATIONARITY_PVALUE: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error("top-two selection needs candidates on at least two distinct features")]
    Selection,
    #[error("feature index {0} out of range")]
    Feature(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    Mop,
    Baz,
    Rev,
}

impl StrategyKind {
    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::Mop => "MOP",
            StrategyKind::Baz => "BAZ",
            StrategyKind::Rev => "REV",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MOP" => Some(StrategyKind::Mop),
            "BAZ" => Some(StrategyKind::Baz),
            "REV" => Some(StrategyKind::Rev),
            _ => None,
        }
    }
}

/// Position sizes per `(date, asset)` in `[-1, 1]`. Row `t` is the position
/// traded at the open of calendar index `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsMatrix {
    values: Frame<f64>,
    pub label: String,
    pub provenance: Option<Combo>,
}

impl WeightsMatrix {
    pub fn zeros(rows: usize, cols: usize, label: &str) -> Self {
        Self { values: Frame::filled(rows, cols, 0.0), label: label.into(), provenance: None }
    }

    pub fn ones(rows: usize, cols: usize, label: &str) -> Self {
        Self { values: Frame::filled(rows, cols, 1.0), label: label.into(), provenance: None }
    }

    pub fn from_frame(values: Frame<f64>, label: &str) -> Self {
        Self { values, label: label.into(), provenance: None }
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        *self.values.get(t, i)
    }

    pub fn set(&mut self, t: usize, i: usize, w: f64) {
        self.values.set(t, i, w);
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn frame(&self) -> &Frame<f64> {
        &self.values
    }

    pub fn is_bounded(&self) -> bool {
        self.as_slice().iter().all(|w| (-1.0..=1.0).contains(w))
    }
}

/// A feature and signal parameterisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combo {
    pub feature: String,
    pub params: SignalParams,
}

impl Combo {
    pub fn kind(&self) -> StrategyKind {
        match self.params {
            SignalParams::Mop(_) => StrategyKind::Mop,
            SignalParams::Baz(_) => StrategyKind::Baz,
            SignalParams::Rev(_) => StrategyKind::Rev,
        }
    }

    pub fn requires_stationarity(&self) -> bool {
        matches!(self.params, SignalParams::Rev(_))
    }

    /// Deterministic order on `(feature, params)`.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.feature.cmp(&other.feature).then_with(|| params_cmp(&self.params, &other.params))
    }

    pub fn describe(&self) -> String {
        use core::fmt::Write;
        let mut s = String::new();
        let _ = match self.params {
            SignalParams::Mop(p) => write!(s, "k={}", p.k),
            SignalParams::Baz(p) => write!(s, "(S_k,L_k)=({},{})", p.short, p.long),
            SignalParams::Rev(p) => write!(s, "(k,z_u,z_l)=({},{},{})", p.k, p.entry, p.exit),
        };
        s
    }
}

fn params_cmp(a: &SignalParams, b: &SignalParams) -> Ordering {
    use SignalParams::*;
    let rank = |p: &SignalParams| match p {
        Mop(_) => 0,
        Baz(_) => 1,
        Rev(_) => 2,
    };
    match (a, b) {
        (Mop(x), Mop(y)) => x.cmp(y),
        (Baz(x), Baz(y)) => x.cmp(y),
        (Rev(x), Rev(y)) => x
            .k
            .cmp(&y.k)
            .then_with(|| x.entry.total_cmp(&y.entry))
            .then_with(|| x.exit.total_cmp(&y.exit)),
        _ => rank(a).cmp(&rank(b)),
    }
}

/// Parameter sets searched per strategy kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyGrid {
    pub mop_lookbacks: Vec<usize>,
    pub baz_timescales: Vec<(usize, usize)>,
    pub rev_lookbacks: Vec<usize>,
    pub rev_entry: Vec<f64>,
    pub rev_exit: Vec<f64>,
}

impl Default for StrategyGrid {
    fn default() -> Self {
        Self {
            mop_lookbacks: MOP_LOOKBACKS.to_vec(),
            baz_timescales: BAZ_TIMESCALES.to_vec(),
            rev_lookbacks: REV_LOOKBACKS.to_vec(),
            rev_entry: REV_ENTRY.to_vec(),
            rev_exit: REV_EXIT.to_vec(),
        }
    }
}

impl StrategyGrid {
    /// Full Cartesian product of `features` with the kind's parameter sets.
    pub fn enumerate(&self, kind: StrategyKind, features: &[String]) -> Result<Vec<Combo>, SignalError> {
        let mut params = Vec::new();
        match kind {
            StrategyKind::Mop => {
                for &k in &self.mop_lookbacks {
                    params.push(SignalParams::Mop(MopParams::new(k)?));
                }
            }
            StrategyKind::Baz => {
                for &(s, l) in &self.baz_timescales {
                    params.push(SignalParams::Baz(BazParams::new(s, l)?));
                }
            }
            StrategyKind::Rev => {
                for &k in &self.rev_lookbacks {
                    for &e in &self.rev_entry {
                        for &x in &self.rev_exit {
                            params.push(SignalParams::Rev(RevParams::new(k, e, x)?));
                        }
                    }
                }
            }
        }
        Ok(features
            .iter()
            .flat_map(|f| params.iter().map(move |p| Combo { feature: f.clone(), params: *p }))
            .collect())
    }
}

pub fn enumerate_grid(kind: StrategyKind, features: &[String]) -> Result<Vec<Combo>, SignalError> {
    StrategyGrid::default().enumerate(kind, features)
}

/// `w_t = sign(s_{t-1})`; masked or zero signal is flat.
pub fn lagged_sign(signal: &[Option<f64>]) -> Vec<f64> {
    let mut w = vec![0.0; signal.len()];
    for t in 1..signal.len() {
        w[t] = signal[t - 1].map_or(0.0, sign);
    }
    w
}

/// Reversion state machine on a same-date z path:
/// enter `-sign(z)` from flat when `|z| >= entry`, hold while `|z| >= exit`,
/// otherwise flat. Masked z exits.
pub fn rev_state_machine(z: &[Option<f64>], entry: f64, exit: f64) -> Vec<f64> {
    let mut w = vec![0.0; z.len()];
    let mut prev = 0.0;
    for (t, s) in z.iter().enumerate() {
        let cur = match s {
            Some(s) if prev == 0.0 && s.abs() >= entry => -sign(*s),
            Some(s) if prev != 0.0 && s.abs() >= exit => prev,
            _ => 0.0,
        };
        w[t] = cur;
        prev = cur;
    }
    w
}

fn lag(xs: Vec<f64>) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    if xs.len() > 1 {
        out[1..].copy_from_slice(&xs[..xs.len() - 1]);
    }
    out
}

fn fill(panel: &FactorPanel, label: &str, columns: impl Fn(usize) -> Result<Vec<f64>, SignalError>) -> Result<WeightsMatrix, StrategyError> {
    let mut w = WeightsMatrix::zeros(panel.len(), panel.n_assets(), label);
    for i in 0..panel.n_assets() {
        for (t, v) in columns(i)?.into_iter().enumerate() {
            w.set(t, i, v);
        }
    }
    Ok(w)
}

fn check_feature(panel: &FactorPanel, feature: usize) -> Result<(), StrategyError> {
    if feature >= panel.n_features() {
        return Err(StrategyError::Feature(feature));
    }
    Ok(())
}

/// Time-series momentum on the k-day change of `feature`.
pub fn mop_weights(panel: &FactorPanel, feature: usize, params: MopParams) -> Result<WeightsMatrix, StrategyError> {
    check_feature(panel, feature)?;
    fill(panel, "MOP", |i| {
        Ok(lagged_sign(&signal_values(&[], &panel.level_column(i, feature), SignalParams::Mop(params))?))
    })
}

/// MACD crossover momentum on `feature`.
pub fn baz_weights(panel: &FactorPanel, feature: usize, params: BazParams) -> Result<WeightsMatrix, StrategyError> {
    check_feature(panel, feature)?;
    fill(panel, "BAZ", |i| {
        Ok(lagged_sign(&signal_values(&[], &panel.level_column(i, feature), SignalParams::Baz(params))?))
    })
}

/// Bollinger-style reversion on the open-vs-feature k-day spread z-score.
pub fn rev_weights(panel: &FactorPanel, open: usize, feature: usize, params: RevParams) -> Result<WeightsMatrix, StrategyError> {
    check_feature(panel, feature)?;
    check_feature(panel, open)?;
    fill(panel, "REV", |i| {
        let z = signal_values(&panel.level_column(i, open), &panel.level_column(i, feature), SignalParams::Rev(params))?;
        Ok(lag(rev_state_machine(&z, params.entry, params.exit)))
    })
}

/// Equal unit weight on every asset, regardless of availability.
pub fn long_only_weights(rows: usize, assets: usize) -> WeightsMatrix {
    WeightsMatrix::ones(rows, assets, "Long-only")
}

pub fn combo_weights(panel: &FactorPanel, open: usize, combo: &Combo) -> Result<WeightsMatrix, StrategyError> {
    let feature = panel.feature_index(&combo.feature).map_err(|_| StrategyError::Feature(usize::MAX))?;
    let mut w = match combo.params {
        SignalParams::Mop(p) => mop_weights(panel, feature, p)?,
        SignalParams::Baz(p) => baz_weights(panel, feature, p)?,
        SignalParams::Rev(p) => rev_weights(panel, open, feature, p)?,
    };
    w.provenance = Some(combo.clone());
    Ok(w)
}

/// ADF filter for reversion combos: every asset's spread with at least 30
/// observations inside `window` must reach [`STATIONARITY_PVALUE`]. A
/// constant spread (the open feature against itself) carries no signal and
/// is rejected.
pub fn spread_is_stationary(
    panel: &FactorPanel,
    open: usize,
    combo: &Combo,
    window: Range<usize>,
) -> Result<bool, StrategyError> {
    let SignalParams::Rev(p) = combo.params else {
        return Ok(true);
    };
    let feature = panel.feature_index(&combo.feature).map_err(|_| StrategyError::Feature(usize::MAX))?;
    let mut tested = 0;
    for i in 0..panel.n_assets() {
        let spread = reversion_spread(&panel.level_column(i, open), &panel.level_column(i, feature), p.k)?;
        let xs = present(&spread[window.start.min(spread.len())..window.end.min(spread.len())]);
        if xs.len() < 30 {
            continue;
        }
        tested += 1;
        let adf = adf_test(&xs)?;
        if adf.degenerate || adf.pvalue > STATIONARITY_PVALUE {
            return Ok(false);
        }
    }
    Ok(tested > 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCombo {
    pub combo: Combo,
    /// Training-window Sharpe ratio (non-finite scores rank last).
    pub sharpe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSelection {
    pub kind: StrategyKind,
    pub picks: [ScoredCombo; 2],
}

fn score_cmp(a: &ScoredCombo, b: &ScoredCombo) -> Ordering {
    let key = |s: &ScoredCombo| if s.sharpe.is_finite() { s.sharpe } else { f64::NEG_INFINITY };
    key(b).total_cmp(&key(a)).then_with(|| a.combo.total_cmp(&b.combo))
}

/// Best combo by Sharpe, then the best combo on a different feature. Ties
/// break on `(feature, params)` so the result is order-independent.
pub fn select_top2(candidates: &[ScoredCombo]) -> Result<ComboSelection, StrategyError> {
    let mut sorted: Vec<&ScoredCombo> = candidates.iter().collect();
    sorted.sort_by(|a, b| score_cmp(a, b));
    let first = *sorted.first().ok_or(StrategyError::Selection)?;
    let second = sorted
        .iter()
        .find(|c| c.combo.feature != first.combo.feature)
        .ok_or(StrategyError::Selection)?;
    Ok(ComboSelection { kind: first.combo.kind(), picks: [first.clone(), (*second).clone()] })
}

/// Volatility-scaled equal-risk portfolio of component books (CMB).
pub fn cmb_combine(components: &[PortfolioSeries]) -> Result<PortfolioSeries, StrategyError> {
    Ok(combine_equal_risk(components)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn literal_reversion_path() {
        let z = [Some(0.0), Some(2.0), Some(1.2), Some(0.6)];
        assert_eq!(rev_state_machine(&z, 1.75, 0.75), vec![0.0, -1.0, -1.0, 0.0]);
        let neg = [Some(-1.8), Some(-0.8), Some(-0.7)];
        assert_eq!(rev_state_machine(&neg, 1.75, 0.75), vec![1.0, 1.0, 0.0]);
        let quiet = [Some(1.7), Some(-1.6), None, Some(0.1)];
        assert_eq!(rev_state_machine(&quiet, 1.75, 0.75), vec![0.0; 4]);
    }

    #[test]
    fn lagged_sign_is_flat_on_zero_and_mask() {
        assert_eq!(lagged_sign(&[Some(1.0), Some(0.0), None, Some(-3.0)]), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn grid_sizes() {
        let feats: Vec<String> = (0..16).map(|k| k.to_string()).collect();
        assert_eq!(enumerate_grid(StrategyKind::Mop, &feats).unwrap().len(), 80);
        assert_eq!(enumerate_grid(StrategyKind::Baz, &feats).unwrap().len(), 64);
        assert_eq!(enumerate_grid(StrategyKind::Rev, &feats).unwrap().len(), 576);
    }

    fn scored(f: &str, k: usize, s: f64) -> ScoredCombo {
        ScoredCombo { combo: Combo { feature: f.into(), params: SignalParams::Mop(MopParams { k }) }, sharpe: s }
    }

    #[test]
    fn second_pick_uses_another_feature() {
        let c = [scored("fA", 5, 2.0), scored("fA", 21, 1.9), scored("fB", 63, 1.5)];
        let sel = select_top2(&c).unwrap();
        assert_eq!(sel.picks[0].combo.feature, "fA");
        assert_eq!(sel.picks[0].sharpe, 2.0);
        assert_eq!(sel.picks[1].combo.feature, "fB");
    }

    #[test]
    fn ties_break_lexicographically() {
        let c = [scored("fB", 5, 1.0), scored("fA", 21, 1.0), scored("fA", 5, 1.0), scored("fC", 5, 0.5)];
        let sel = select_top2(&c).unwrap();
        assert_eq!(sel.picks[0].combo.describe(), "k=5");
        assert_eq!(sel.picks[0].combo.feature, "fA");
        assert_eq!(sel.picks[1].combo.feature, "fB");
    }

    #[test]
    fn single_feature_universe_cannot_select() {
        let c = [scored("fA", 5, 1.0), scored("fA", 21, 0.4)];
        assert_eq!(select_top2(&c), Err(StrategyError::Selection));
    }

    #[test]
    fn long_only_is_all_ones() {
        let w = long_only_weights(5, 3);
        assert_eq!(w.as_slice().len(), 15);
        assert!(w.as_slice().iter().all(|v| *v == 1.0));
    }
}
