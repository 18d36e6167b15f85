//! TOML run configuration.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use mfin_core::mfin::MfinConfig;
use mfin_core::strategies::{StrategyGrid, StrategyKind};

use crate::error::{CliError, Result};

/// Transaction-cost levels swept for the cost table, in bps.
pub const DEFAULT_COST_GRID: [f64; 6] = [0.0, 2.5, 5.0, 7.5, 10.0, 12.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub splits: SplitConfig,
    pub strategies: StrategyConfig,
    pub costs: CostConfig,
    pub mfin: MfinConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub assets: Vec<String>,
    /// Features in model-input order. Empty means every feature found.
    pub features: Vec<String>,
    pub open_feature: String,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    /// Absent `(asset, feature)` pairs become neutral instead of failing.
    pub neutral_fill: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub first_test_start: NaiveDate,
    pub increment_months: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub kinds: Vec<String>,
    #[serde(flatten)]
    pub grid: StrategyGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Cost charged in backtests, bps per unit turnover.
    pub backtest_bps: f64,
    pub sweep_bps: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            splits: SplitConfig::default(),
            strategies: StrategyConfig::default(),
            costs: CostConfig::default(),
            mfin: MfinConfig::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { assets: Vec::new(), features: Vec::new(), open_feature: "open".into(), start: None, end: None, neutral_fill: false }
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { first_test_start: NaiveDate::from_ymd_opt(2019, 4, 1).unwrap(), increment_months: 12 }
    }
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self { kinds: vec!["MOP".into(), "BAZ".into(), "REV".into()], grid: StrategyGrid::default() }
    }
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { backtest_bps: 0.0, sweep_bps: DEFAULT_COST_GRID.to_vec() }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn kinds(&self) -> Result<Vec<StrategyKind>> {
        self.strategies
            .kinds
            .iter()
            .map(|k| StrategyKind::parse(k).ok_or_else(|| CliError::Config(format!("unknown strategy kind {k}"))))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.kinds()?;
        if !self.data.features.is_empty() && !self.data.features.contains(&self.data.open_feature) {
            return Err(CliError::Config(format!("open feature {} is not among the features", self.data.open_feature)));
        }
        if let (Some(a), Some(b)) = (self.data.start, self.data.end) {
            if a > b {
                return Err(CliError::Config("data.start is after data.end".into()));
            }
        }
        if self.splits.increment_months == 0 {
            return Err(CliError::Config("splits.increment_months must be positive".into()));
        }
        let c = &self.costs;
        if !c.backtest_bps.is_finite() || c.backtest_bps < 0.0 {
            return Err(CliError::Config("costs.backtest_bps must be a non-negative number".into()));
        }
        if c.sweep_bps.iter().any(|x| !x.is_finite() || *x < 0.0) || c.sweep_bps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("costs.sweep_bps must be non-negative and strictly increasing".into()));
        }
        let g = &self.strategies.grid;
        for kind in self.kinds()? {
            g.enumerate(kind, &["x".to_string()]).map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.mfin.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_hyperparameter_table() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.mfin.fixed.max_epochs, 250);
        assert_eq!(c.mfin.fixed.early_stopping, 25);
        assert_eq!(c.mfin.hyperband.factor, 3);
        assert_eq!(c.mfin.tuned.ts_filter_length, vec![3, 5, 10, 15, 20]);
        assert_eq!(c.costs.sweep_bps, DEFAULT_COST_GRID.to_vec());
        assert_eq!(c.kinds().unwrap(), vec![StrategyKind::Mop, StrategyKind::Baz, StrategyKind::Rev]);
    }

    #[test]
    fn sections_parse() {
        let text = r#"
seed = 9
[data]
assets = ["BTC", "ETH"]
features = ["open", "volume"]
start = "2018-01-01"
end = "2023-03-31"
[splits]
first_test_start = "2019-04-01"
[strategies]
kinds = ["MOP"]
mop_lookbacks = [21]
baz_timescales = [[4, 12]]
[costs]
backtest_bps = 2.5
[mfin.fixed]
sequence_length = 50
[mfin.tuned]
hidden_layer_size = [8]
ts_filter_length = [3]
[mfin.hyperband]
max_trials = 5
"#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.data.start, NaiveDate::from_ymd_opt(2018, 1, 1));
        assert_eq!(c.strategies.grid.mop_lookbacks, vec![21]);
        assert_eq!(c.strategies.grid.baz_timescales, vec![(4, 12)]);
        assert_eq!(c.mfin.fixed.sequence_length, 50);
        assert_eq!(c.mfin.hyperband.max_trials, 5);
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "[strategies]\nkinds = [\"XYZ\"]",
            "[costs]\nsweep_bps = [5.0, 2.5]",
            "[data]\nfeatures = [\"volume\"]",
            "[strategies]\nmop_lookbacks = [0]",
            "[mfin.fixed]\nc_valid = 1.0",
            "bogus = 1",
        ] {
            let e = RunConfig::from_toml(text).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}");
        }
    }
}
