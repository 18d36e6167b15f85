//! Volatility-targeted, cost-aware portfolio returns.
//!
//! A series row `k` is the position decided at calendar index `start + k`
//! (trade at that day's open) and the return it earns up to the next open,
//! realised at `start + k + 1`. Positions are stored fully scaled so that
//! `gross = Σ_i p_i r_i`, `turnover = Σ_i |p_i - p_i^{prev}|` and
//! `net = gross - C · turnover` hold exactly for every cost level `C`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ew::{ew_std, EwMoments, MIN_OBS};
use crate::frame::Frame;
use crate::ingest::{asset_vol, FactorPanel};
use crate::math::sqrt;
use crate::strategies::WeightsMatrix;
use crate::{TRADING_DAYS, VOL_TARGET};

/// Span and minimum history of the portfolio-level volatility estimate.
pub const PORTFOLIO_VOL_SPAN: f64 = 21.0;
pub const PORTFOLIO_VOL_MIN_OBS: usize = 21;
/// Upper bound on the portfolio-level factor `σ_tgt / σ_t`.
pub const MAX_PORTFOLIO_SCALE: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum PortfolioError {
    #[error("volatility undefined for asset {asset} at index {t} while weight is {weight}")]
    UndefinedVol { t: usize, asset: usize, weight: f64 },
    #[error("shapes do not line up: {0}")]
    Misaligned(&'static str),
    #[error("decision range {start}..{end} needs returns up to index {end} but only {rows} rows exist")]
    Range { start: usize, end: usize, rows: usize },
    #[error("nothing to combine")]
    Empty,
}

/// Ex-ante annualised volatility per `(t, asset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolEstimate {
    vols: Frame<Option<f64>>,
}

impl VolEstimate {
    pub fn new(vols: Frame<Option<f64>>) -> Self {
        Self { vols }
    }

    /// 63-day EW std of the panel's open returns, annualised.
    pub fn from_panel(panel: &FactorPanel, open: usize) -> Self {
        let (n, na) = (panel.len(), panel.n_assets());
        let mut vols = Frame::filled(n, na, None);
        for t in 0..n {
            for i in 0..na {
                vols.set(t, i, asset_vol(panel, t, i, open));
            }
        }
        Self { vols }
    }

    /// Same estimator applied to a returns grid (row `t` = return realised at `t`).
    pub fn from_returns(returns: &Frame<Option<f64>>) -> Self {
        let (n, na) = (returns.rows(), returns.cols());
        let mut vols = Frame::filled(n, na, None);
        for i in 0..na {
            let sd = ew_std(&returns.column(i), 63.0, MIN_OBS);
            for (t, s) in sd.into_iter().enumerate() {
                vols.set(t, i, s.map(|s| s * sqrt(TRADING_DAYS)).filter(|s| *s > 0.0));
            }
        }
        Self { vols }
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        *self.vols.get(t, i)
    }

    pub fn rows(&self) -> usize {
        self.vols.rows()
    }

    pub fn cols(&self) -> usize {
        self.vols.cols()
    }

    /// Zeroes weights where no volatility estimate exists yet.
    pub fn mask_weights(&self, w: &mut WeightsMatrix) {
        for t in 0..w.rows().min(self.rows()) {
            for i in 0..w.cols() {
                if self.get(t, i).is_none() {
                    w.set(t, i, 0.0);
                }
            }
        }
    }
}

/// Open-price returns of each asset, row `t` realised at `t`.
pub fn open_returns(panel: &FactorPanel, open: usize) -> Frame<Option<f64>> {
    let (n, na) = (panel.len(), panel.n_assets());
    let mut out = Frame::filled(n, na, None);
    for t in 0..n {
        for i in 0..na {
            out.set(t, i, panel.ret(t, i, open));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    AssetScaled,
    DoublyScaled,
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleState {
    Unscaled,
    /// Fewer than the required prior observations; passed through.
    Warmup,
    /// Zero estimated volatility; passed through.
    Degenerate,
    Scaled,
    /// Factor clipped at [`MAX_PORTFOLIO_SCALE`].
    Capped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSeries {
    pub start: usize,
    pub positions: Frame<f64>,
    /// Positions held before row 0 (zeros at inception).
    pub prior: Vec<f64>,
    pub gross: Vec<f64>,
    pub turnover: Vec<f64>,
    pub cost: f64,
    pub scale: Vec<f64>,
    pub scale_state: Vec<ScaleState>,
    pub stage: Stage,
}

fn turnover_of(positions: &Frame<f64>, prior: &[f64]) -> Vec<f64> {
    (0..positions.rows())
        .map(|k| {
            let prev = if k == 0 { prior } else { positions.row(k - 1) };
            positions.row(k).iter().zip(prev).map(|(a, b)| (a - b).abs()).sum()
        })
        .collect()
}

impl PortfolioSeries {
    pub fn len(&self) -> usize {
        self.gross.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gross.is_empty()
    }

    /// Calendar index at which row `k`'s return is realised.
    pub fn realized_index(&self, k: usize) -> usize {
        self.start + k + 1
    }

    pub fn net(&self) -> Vec<f64> {
        self.gross.iter().zip(&self.turnover).map(|(g, v)| g - self.cost * v).collect()
    }

    pub fn with_cost(&self, cost: f64) -> Self {
        Self { cost, ..self.clone() }
    }

    pub fn total_gross(&self) -> f64 {
        self.gross.iter().sum()
    }

    pub fn total_turnover(&self) -> f64 {
        self.turnover.iter().sum()
    }

    pub fn total_net(&self) -> f64 {
        self.net().iter().sum()
    }

    /// Rows `[range)`; the position before the slice becomes `prior`, so
    /// turnover values are unchanged.
    pub fn slice(&self, range: Range<usize>) -> Self {
        let prior = if range.start == 0 { self.prior.clone() } else { self.positions.row(range.start - 1).to_vec() };
        Self {
            start: self.start + range.start,
            positions: self.positions.slice_rows(range.start, range.end),
            prior,
            gross: self.gross[range.clone()].to_vec(),
            turnover: self.turnover[range.clone()].to_vec(),
            cost: self.cost,
            scale: self.scale[range.clone()].to_vec(),
            scale_state: self.scale_state[range].to_vec(),
            stage: self.stage,
        }
    }

    /// Rows whose decision index lies in `decisions`.
    pub fn slice_decisions(&self, decisions: Range<usize>) -> Self {
        let a = decisions.start.saturating_sub(self.start).min(self.len());
        let b = decisions.end.saturating_sub(self.start).min(self.len());
        self.slice(a..b)
    }

    /// Joins consecutive pieces as one continuously traded book; turnover at
    /// each seam is recomputed against the previous piece's last position.
    pub fn concat(parts: &[PortfolioSeries]) -> Result<Self, PortfolioError> {
        let first = parts.first().ok_or(PortfolioError::Empty)?;
        let cols = first.positions.cols();
        let mut next = first.start;
        let mut data = Vec::new();
        let (mut gross, mut scale, mut state) = (Vec::new(), Vec::new(), Vec::new());
        for p in parts {
            if p.start != next || p.positions.cols() != cols || p.cost != first.cost {
                return Err(PortfolioError::Misaligned("pieces must be contiguous with equal width and cost"));
            }
            next = p.start + p.len();
            data.extend_from_slice(p.positions.as_slice());
            gross.extend_from_slice(&p.gross);
            scale.extend_from_slice(&p.scale);
            state.extend_from_slice(&p.scale_state);
        }
        let positions = Frame::from_vec(gross.len(), cols, data);
        let turnover = turnover_of(&positions, &first.prior);
        Ok(Self {
            start: first.start,
            positions,
            prior: first.prior.clone(),
            gross,
            turnover,
            cost: first.cost,
            scale,
            scale_state: state,
            stage: first.stage,
        })
    }
}

/// Asset-level volatility targeting with linear costs:
/// `R_{t+1} = (σ_tgt / N_A) Σ_i [ (w_{i,t}/σ_{i,t}) r_{i,t+1} - C |w_{i,t}/σ_{i,t} - w_{i,t-1}/σ_{i,t-1}| ]`.
/// The day before the first decision is flat, so inception is charged.
pub fn portfolio_returns(
    weights: &WeightsMatrix,
    returns: &Frame<Option<f64>>,
    vol: &VolEstimate,
    cost: f64,
    decisions: Range<usize>,
) -> Result<PortfolioSeries, PortfolioError> {
    let na = weights.cols();
    if returns.cols() != na || vol.cols() != na {
        return Err(PortfolioError::Misaligned("weights, returns and vols need the same assets"));
    }
    let rows = weights.rows().min(returns.rows()).min(vol.rows());
    if decisions.start > decisions.end || decisions.end + 1 > rows {
        return Err(PortfolioError::Range { start: decisions.start, end: decisions.end, rows });
    }
    let len = decisions.len();
    let prefactor = VOL_TARGET / na as f64;
    let mut positions = Frame::filled(len, na, 0.0);
    let mut gross = vec![0.0; len];
    for (k, t) in decisions.clone().enumerate() {
        for i in 0..na {
            let w = weights.get(t, i);
            if w == 0.0 {
                continue;
            }
            let s = vol.get(t, i).ok_or(PortfolioError::UndefinedVol { t, asset: i, weight: w })?;
            let p = prefactor * w / s;
            positions.set(k, i, p);
            gross[k] += p * returns.get(t + 1, i).unwrap_or(0.0);
        }
    }
    let prior = vec![0.0; na];
    let turnover = turnover_of(&positions, &prior);
    Ok(PortfolioSeries {
        start: decisions.start,
        positions,
        prior,
        gross,
        turnover,
        cost,
        scale: vec![1.0; len],
        scale_state: vec![ScaleState::Unscaled; len],
        stage: Stage::AssetScaled,
    })
}

/// Portfolio-level targeting: row `k` is multiplied by `σ_tgt / σ_k`, with
/// `σ_k` the annualised 21-day EW std of the gross returns realised up to the
/// decision date, counting only rows that held a position. The estimate uses
/// gross returns so that net returns stay linear in the cost coefficient.
pub fn second_layer_scale(series: &PortfolioSeries) -> PortfolioSeries {
    let mut st = EwMoments::with_span(PORTFOLIO_VOL_SPAN);
    let n = series.len();
    let mut scale = vec![1.0; n];
    let mut state = vec![ScaleState::Warmup; n];
    for k in 0..n {
        if st.nobs() >= PORTFOLIO_VOL_MIN_OBS {
            match st.std() {
                Some(s) if s > 0.0 => {
                    let f = VOL_TARGET / (s * sqrt(TRADING_DAYS));
                    (scale[k], state[k]) = if f > MAX_PORTFOLIO_SCALE {
                        (MAX_PORTFOLIO_SCALE, ScaleState::Capped)
                    } else {
                        (f, ScaleState::Scaled)
                    };
                }
                _ => state[k] = ScaleState::Degenerate,
            }
        }
        if series.positions.row(k).iter().any(|p| *p != 0.0) {
            st.push(series.gross[k]);
        }
    }
    let cols = series.positions.cols();
    let mut positions = series.positions.clone();
    for k in 0..n {
        for p in positions.row_mut(k) {
            *p *= scale[k];
        }
    }
    let gross: Vec<f64> = series.gross.iter().zip(&scale).map(|(g, f)| g * f).collect();
    debug_assert_eq!(positions.cols(), cols);
    let turnover = turnover_of(&positions, &series.prior);
    PortfolioSeries {
        start: series.start,
        positions,
        prior: series.prior.clone(),
        gross,
        turnover,
        cost: series.cost,
        scale,
        scale_state: state,
        stage: Stage::DoublyScaled,
    }
}

/// Equal average of positions and gross returns of aligned series.
pub fn average(parts: &[PortfolioSeries]) -> Result<PortfolioSeries, PortfolioError> {
    let first = parts.first().ok_or(PortfolioError::Empty)?;
    let (n, cols) = (first.len(), first.positions.cols());
    if parts.iter().any(|p| p.start != first.start || p.len() != n || p.positions.cols() != cols || p.cost != first.cost) {
        return Err(PortfolioError::Misaligned("combined series must share start, length, width and cost"));
    }
    let m = parts.len() as f64;
    let mut positions = Frame::filled(n, cols, 0.0);
    let mut gross = vec![0.0; n];
    let mut prior = vec![0.0; cols];
    for p in parts {
        for k in 0..n {
            gross[k] += p.gross[k] / m;
            for (dst, src) in positions.row_mut(k).iter_mut().zip(p.positions.row(k)) {
                *dst += src / m;
            }
        }
        for (dst, src) in prior.iter_mut().zip(&p.prior) {
            *dst += src / m;
        }
    }
    let turnover = turnover_of(&positions, &prior);
    Ok(PortfolioSeries {
        start: first.start,
        positions,
        prior,
        gross,
        turnover,
        cost: first.cost,
        scale: vec![1.0; n],
        scale_state: vec![ScaleState::Unscaled; n],
        stage: Stage::Combined,
    })
}

/// Equal-risk combination: every component is scaled to the target by its own
/// rolling volatility, then the scaled books are averaged.
pub fn combine_equal_risk(components: &[PortfolioSeries]) -> Result<PortfolioSeries, PortfolioError> {
    let scaled: Vec<PortfolioSeries> = components.iter().map(second_layer_scale).collect();
    average(&scaled)
}

/// Arithmetic mean of seed weight matrices.
pub fn ensemble_average(members: &[WeightsMatrix]) -> Result<WeightsMatrix, PortfolioError> {
    let first = members.first().ok_or(PortfolioError::Empty)?;
    let (rows, cols) = (first.rows(), first.cols());
    if members.iter().any(|m| m.rows() != rows || m.cols() != cols) {
        return Err(PortfolioError::Misaligned("ensemble members must share shape"));
    }
    let m = members.len() as f64;
    let mut out = WeightsMatrix::zeros(rows, cols, "ensemble");
    for t in 0..rows {
        for i in 0..cols {
            let s: f64 = members.iter().map(|w| w.get(t, i)).sum();
            out.set(t, i, s / m);
        }
    }
    Ok(out)
}
