//! Walk-forward MFIN: search, seed ensemble and out-of-sample trading.

use rayon::prelude::*;

use mfin_core::ingest::FactorPanel;
use mfin_core::mfin::{
    hyperband_search, predict_weights, train, training_windows, EpochLog, HyperbandResult, MfinConfig, TrainData,
    TrainSettings, TrainedEnsemble,
};
use mfin_core::portfolio::{ensemble_average, PortfolioSeries, PORTFOLIO_VOL_MIN_OBS};
use mfin_core::splits::SplitPlan;
use mfin_core::strategies::WeightsMatrix;

use crate::error::{CliError, Result};
use crate::guard::GuardedPanel;
use crate::harness::{scaled_book, Market, StrategyRun};

/// In-sample decisions traded ahead of each test span so the portfolio
/// volatility estimate is warm when the span starts.
pub const SCALE_WARMUP: usize = 2 * PORTFOLIO_VOL_MIN_OBS;

pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct MfinSplit {
    pub split: usize,
    pub search: HyperbandResult,
    pub ensemble: TrainedEnsemble,
    pub logs: Vec<Vec<EpochLog>>,
    /// Per-seed positions; only the traded decisions are non-zero.
    pub member_weights: Vec<WeightsMatrix>,
    pub weights: WeightsMatrix,
    /// Decisions traded, warm-up included.
    pub traded: std::ops::Range<usize>,
    pub series: PortfolioSeries,
}

pub struct MfinRun {
    pub run: StrategyRun,
    pub splits: Vec<MfinSplit>,
}

pub fn run_mfin(panel: &FactorPanel, open_feature: &str, plan: &SplitPlan, cfg: &MfinConfig, seed: u64, cost_bps: f64) -> Result<MfinRun> {
    cfg.validate()?;
    let open = panel.feature_index(open_feature)?;
    let market = Market::new(panel, open);
    let len = cfg.fixed.sequence_length;
    let mut splits = Vec::with_capacity(plan.len());
    for (k, split) in plan.splits.iter().enumerate() {
        let split_seed = mix_seed(seed, k as u64, 0);
        let guard = GuardedPanel::new(panel, split.test.start);
        let train_panel = guard.view(split.test.start)?;
        let windows = training_windows(&train_panel, 0..train_panel.len(), len, open)?;
        let data = TrainData::split(windows, cfg.fixed.valid_fraction)?;
        let patience = cfg.fixed.early_stopping;
        let mut call = 0u64;
        let search = hyperband_search(&cfg.tuned, &cfg.hyperband, split_seed, |jobs| {
            call += 1;
            let c = call;
            jobs.par_iter()
                .enumerate()
                .map(|(j, (trial, epochs))| {
                    let s = mix_seed(split_seed, c, j as u64 + 1);
                    let out = train(trial, &data, s, TrainSettings { max_epochs: *epochs, patience })?;
                    Ok::<f64, mfin_core::mfin::MfinError>(out.best_valid)
                })
                .collect()
        })?;
        let best = search.best;
        let settings = TrainSettings { max_epochs: cfg.fixed.max_epochs, patience };
        let outcomes = (0..cfg.ensemble_seeds)
            .into_par_iter()
            .map(|s| train(&best, &data, mix_seed(seed, k as u64, 1_000 + s as u64), settings))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let logs = outcomes.iter().map(|o| o.log.clone()).collect();
        let ensemble = TrainedEnsemble { trial: best, members: outcomes.into_iter().map(|o| o.model).collect() };

        let test = split.test_decisions();
        let traded = test.start.saturating_sub(SCALE_WARMUP).max(len + 1)..test.end;
        if traded.start > test.start {
            return Err(CliError::Data(format!("split {k}: not enough history before the test span")));
        }
        let member_weights = ensemble
            .members
            .par_iter()
            .map(|m| predict_weights(panel, traded.clone(), len, "MFIN", |x| m.predict(x)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let weights = predict_weights(panel, traded.clone(), len, "MFIN", |x| ensemble.predict(x))?;
        let averaged = ensemble_average(&member_weights)?;
        let drift = weights.as_slice().iter().zip(averaged.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if drift > 1e-12 {
            return Err(CliError::Numerical(format!("split {k}: ensemble weights differ from member mean by {drift:e}")));
        }
        let series = scaled_book(&market, weights.clone(), cost_bps * 1e-4, traded.clone())?.slice_decisions(test);
        splits.push(MfinSplit { split: k, search, ensemble, logs, member_weights, weights, traded, series });
    }
    let parts: Vec<PortfolioSeries> = splits.iter().map(|s| s.series.clone()).collect();
    let run = StrategyRun { name: "MFIN".into(), series: PortfolioSeries::concat(&parts)?, selections: Vec::new(), ex_post: false };
    Ok(MfinRun { run, splits })
}

/// Out-of-sample book from reloaded members, for reproducibility checks.
pub fn replay_split(panel: &FactorPanel, open_feature: &str, ensemble: &TrainedEnsemble, len: usize, traded: std::ops::Range<usize>, test: std::ops::Range<usize>, cost_bps: f64) -> Result<PortfolioSeries> {
    let open = panel.feature_index(open_feature)?;
    let market = Market::new(panel, open);
    let weights = predict_weights(panel, traded.clone(), len, "MFIN", |x| ensemble.predict(x))?;
    scaled_book(&market, weights, cost_bps * 1e-4, traded)
        .map(|s| s.slice_decisions(test))
}
