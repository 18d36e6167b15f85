//! Backtest orchestration: walk-forward selection, ex-post exploration,
//! benchmarks, combinations and cost sweeps.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use chrono::NaiveDate;
use mfin_core::ingest::FactorPanel;
use mfin_core::metrics::sharpe;
use mfin_core::portfolio::{
    combine_equal_risk, open_returns, portfolio_returns, second_layer_scale, PortfolioSeries, VolEstimate,
};
use mfin_core::frame::Frame;
use mfin_core::splits::SplitPlan;
use mfin_core::strategies::{
    combo_weights, long_only_weights, select_top2, spread_is_stationary, Combo, ScoredCombo, StrategyError,
    StrategyGrid, StrategyKind, WeightsMatrix,
};

use crate::error::{CliError, Result};
use crate::guard::GuardedPanel;

/// Open-price returns and ex-ante volatilities of a panel.
pub struct Market {
    pub returns: Frame<Option<f64>>,
    pub vol: VolEstimate,
}

impl Market {
    pub fn new(panel: &FactorPanel, open: usize) -> Self {
        Self { returns: open_returns(panel, open), vol: VolEstimate::from_panel(panel, open) }
    }
}

/// Doubly scaled book for `weights` over `decisions`.
pub fn scaled_book(market: &Market, mut weights: WeightsMatrix, cost: f64, decisions: Range<usize>) -> Result<PortfolioSeries> {
    market.vol.mask_weights(&mut weights);
    let s = portfolio_returns(&weights, &market.returns, &market.vol, cost, decisions)?;
    Ok(second_layer_scale(&s))
}

/// Decisions realised inside the test spans.
pub fn oos_decisions(plan: &SplitPlan) -> Range<usize> {
    match (plan.splits.first(), plan.splits.last()) {
        (Some(a), Some(b)) => a.test_decisions().start..b.test_decisions().end,
        _ => 0..0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSelection {
    pub split: usize,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub candidates: usize,
    /// Candidates left after the stationarity filter.
    pub eligible: usize,
    pub picks: Vec<ScoredCombo>,
}

#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub name: String,
    pub series: PortfolioSeries,
    pub selections: Vec<SplitSelection>,
    pub ex_post: bool,
}

fn gross_sharpe(series: &PortfolioSeries) -> f64 {
    let first = series.positions.as_slice().chunks(series.positions.cols().max(1)).position(|r| r.iter().any(|p| *p != 0.0));
    match first {
        Some(k) => sharpe(&series.gross[k..]).unwrap_or(f64::NAN),
        None => f64::NAN,
    }
}

/// Zero-cost Sharpe of each combo's doubly scaled book over `window`.
fn score(panel: &FactorPanel, market: &Market, open: usize, combos: &[Combo], window: Range<usize>) -> Result<Vec<ScoredCombo>> {
    combos
        .par_iter()
        .map(|c| {
            let w = combo_weights(panel, open, c)?;
            let book = scaled_book(market, w, 0.0, 0..window.end)?.slice_decisions(window.clone());
            Ok(ScoredCombo { combo: c.clone(), sharpe: gross_sharpe(&book) })
        })
        .collect()
}

fn stationary(panel: &FactorPanel, open: usize, combos: Vec<Combo>, window: Range<usize>) -> Result<Vec<Combo>> {
    let keep: Vec<bool> = combos
        .par_iter()
        .map(|c| spread_is_stationary(panel, open, c, window.clone()))
        .collect::<std::result::Result<_, StrategyError>>()?;
    Ok(combos.into_iter().zip(keep).filter_map(|(c, k)| k.then_some(c)).collect())
}

/// Top two on distinct features; a lone feature yields a single pick.
/// Combos without a finite score never traded and are not picked.
fn pick(scored: &[ScoredCombo]) -> Result<Vec<ScoredCombo>> {
    let scored: Vec<ScoredCombo> = scored.iter().filter(|s| s.sharpe.is_finite()).cloned().collect();
    let scored = scored.as_slice();
    match select_top2(scored) {
        Ok(sel) => Ok(sel.picks.to_vec()),
        Err(StrategyError::Selection) => {
            let mut best: Vec<&ScoredCombo> = scored.iter().collect();
            best.sort_by(|a, b| {
                let key = |s: &ScoredCombo| if s.sharpe.is_finite() { s.sharpe } else { f64::NEG_INFINITY };
                key(b).total_cmp(&key(a)).then_with(|| a.combo.total_cmp(&b.combo))
            });
            Ok(best.first().map(|s| vec![(*s).clone()]).unwrap_or_default())
        }
        Err(e) => Err(e.into()),
    }
}

/// Equal-risk book of the picks, rescaled as a whole, over `0..end`.
fn picks_book(panel: &FactorPanel, market: &Market, open: usize, picks: &[ScoredCombo], cost: f64, end: usize) -> Result<PortfolioSeries> {
    if picks.is_empty() {
        let flat = WeightsMatrix::zeros(panel.len(), panel.n_assets(), "flat");
        return scaled_book(market, flat, cost, 0..end);
    }
    let parts = picks
        .iter()
        .map(|p| scaled_book(market, combo_weights(panel, open, &p.combo)?, cost, 0..end))
        .collect::<Result<Vec<_>>>()?;
    Ok(second_layer_scale(&combine_equal_risk(&parts)?))
}

pub struct Backtest<'a> {
    pub panel: &'a FactorPanel,
    pub open: usize,
    pub plan: &'a SplitPlan,
    pub grid: &'a StrategyGrid,
    /// Cost per unit turnover as a fraction.
    pub cost: f64,
}

impl<'a> Backtest<'a> {
    pub fn new(panel: &'a FactorPanel, open_feature: &str, plan: &'a SplitPlan, grid: &'a StrategyGrid, cost_bps: f64) -> Result<Self> {
        let open = panel.feature_index(open_feature)?;
        if plan.is_empty() {
            return Err(CliError::Config("split plan has no test spans".into()));
        }
        Ok(Self { panel, open, plan, grid, cost: cost_bps * 1e-4 })
    }

    fn combos(&self, kind: StrategyKind) -> Result<Vec<Combo>> {
        self.grid.enumerate(kind, self.panel.features()).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Walk-forward: select on each training window behind a read guard,
    /// then trade the frozen picks over the following test span.
    pub fn run_realistic(&self, kind: StrategyKind) -> Result<StrategyRun> {
        let combos = self.combos(kind)?;
        let market = Market::new(self.panel, self.open);
        let per_split = self
            .plan
            .splits
            .par_iter()
            .enumerate()
            .map(|(k, split)| {
                let guard = GuardedPanel::new(self.panel, split.test.start);
                let train = guard.view(split.test.start)?;
                let train_market = Market::new(&train, self.open);
                let window = 0..train.len() - 1;
                let eligible = match kind {
                    StrategyKind::Rev => stationary(&train, self.open, combos.clone(), 0..train.len())?,
                    _ => combos.clone(),
                };
                let scored = score(&train, &train_market, self.open, &eligible, window)?;
                let picks = pick(&scored)?;
                let decisions = split.test_decisions();
                let book = picks_book(self.panel, &market, self.open, &picks, self.cost, decisions.end)?.slice_decisions(decisions);
                let sel = SplitSelection {
                    split: k,
                    test_start: split.test_start,
                    test_end: split.test_end,
                    candidates: combos.len(),
                    eligible: eligible.len(),
                    picks,
                };
                Ok((book, sel))
            })
            .collect::<Result<Vec<_>>>()?;
        let (books, selections): (Vec<_>, Vec<_>) = per_split.into_iter().unzip();
        Ok(StrategyRun { name: kind.label().into(), series: PortfolioSeries::concat(&books)?, selections, ex_post: false })
    }

    /// Ex-post top two chosen on the whole evaluation window. Not tradable.
    pub fn run_exploration(&self, kind: StrategyKind) -> Result<StrategyRun> {
        let window = oos_decisions(self.plan);
        let market = Market::new(self.panel, self.open);
        let mut combos = self.combos(kind)?;
        if kind == StrategyKind::Rev {
            combos = stationary(self.panel, self.open, combos, window.start..window.end + 1)?;
        }
        let scored = score(self.panel, &market, self.open, &combos, window.clone())?;
        let picks = pick(&scored)?;
        let series = picks_book(self.panel, &market, self.open, &picks, self.cost, window.end)?.slice_decisions(window);
        let first = &self.plan.splits[0];
        let last = &self.plan.splits[self.plan.len() - 1];
        let sel = SplitSelection {
            split: 0,
            test_start: first.test_start,
            test_end: last.test_end,
            candidates: self.combos(kind)?.len(),
            eligible: combos.len(),
            picks,
        };
        Ok(StrategyRun { name: format!("{}-ex-post", kind.label()), series, selections: vec![sel], ex_post: true })
    }

    pub fn run_long_only(&self) -> Result<StrategyRun> {
        let window = oos_decisions(self.plan);
        let market = Market::new(self.panel, self.open);
        let w = long_only_weights(self.panel.len(), self.panel.n_assets());
        let series = scaled_book(&market, w, self.cost, 0..window.end)?.slice_decisions(window);
        Ok(StrategyRun { name: "Long-only".into(), series, selections: Vec::new(), ex_post: false })
    }
}

/// Equal-risk combination of strategy books, rescaled as a whole.
pub fn run_cmb(name: &str, parts: &[&StrategyRun]) -> Result<StrategyRun> {
    let series: Vec<PortfolioSeries> = parts.iter().map(|r| r.series.clone()).collect();
    let combined = second_layer_scale(&combine_equal_risk(&series)?);
    Ok(StrategyRun { name: name.into(), series: combined, selections: Vec::new(), ex_post: parts.iter().any(|r| r.ex_post) })
}
