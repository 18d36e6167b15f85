use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MfinError;

/// Fixed training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedParams {
    pub max_epochs: usize,
    pub early_stopping: usize,
    pub valid_fraction: f64,
    pub batch_size: usize,
    pub sequence_length: usize,
    pub c_valid: f64,
    pub k_valid: f64,
}

impl Default for FixedParams {
    fn default() -> Self {
        Self {
            max_epochs: 250,
            early_stopping: 25,
            valid_fraction: 0.1,
            batch_size: 100,
            sequence_length: 100,
            c_valid: 0.0,
            k_valid: 0.0,
        }
    }
}

/// Tuned grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    /// Cost coefficient in bps.
    pub c: Vec<f64>,
    pub k: Vec<f64>,
    pub dropout_rate: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub hidden_layer_size: Vec<usize>,
    pub n_filters: Vec<usize>,
    pub ts_filter_length: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            c: vec![0.0, 0.5, 1.0, 2.0, 5.0],
            k: vec![0.0, 1.0, 2.0, 5.0],
            dropout_rate: vec![0.1, 0.2, 0.3],
            learning_rate: vec![1e-3, 1e-4, 1e-5],
            hidden_layer_size: vec![32, 64, 96, 128],
            n_filters: vec![16, 32, 48, 64],
            ts_filter_length: vec![3, 5, 10, 15, 20],
        }
    }
}

impl SearchSpace {
    pub fn single(t: &TrialConfig) -> Self {
        Self {
            c: vec![t.c],
            k: vec![t.k],
            dropout_rate: vec![t.dropout_rate],
            learning_rate: vec![t.learning_rate],
            hidden_layer_size: vec![t.hidden_layer_size],
            n_filters: vec![t.n_filters],
            ts_filter_length: vec![t.ts_filter_length],
        }
    }

    pub fn size(&self) -> usize {
        self.c.len()
            * self.k.len()
            * self.dropout_rate.len()
            * self.learning_rate.len()
            * self.hidden_layer_size.len()
            * self.n_filters.len()
            * self.ts_filter_length.len()
    }

    pub fn validate(&self) -> Result<(), MfinError> {
        if self.size() == 0 {
            return Err(MfinError::Config("every tuned grid needs at least one value"));
        }
        if self.dropout_rate.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(MfinError::Config("dropout rate must lie in [0, 1)"));
        }
        if self.learning_rate.iter().any(|l| !(*l > 0.0)) {
            return Err(MfinError::Config("learning rate must be positive"));
        }
        if self.hidden_layer_size.contains(&0) || self.n_filters.contains(&0) || self.ts_filter_length.contains(&0) {
            return Err(MfinError::Config("layer sizes must be positive"));
        }
        Ok(())
    }

    /// Grid point by mixed-radix index.
    pub fn point(&self, mut idx: usize) -> TrialConfig {
        let mut pick = |len: usize| {
            let j = idx % len;
            idx /= len;
            j
        };
        let c = self.c[pick(self.c.len())];
        let k = self.k[pick(self.k.len())];
        let dropout_rate = self.dropout_rate[pick(self.dropout_rate.len())];
        let learning_rate = self.learning_rate[pick(self.learning_rate.len())];
        let hidden_layer_size = self.hidden_layer_size[pick(self.hidden_layer_size.len())];
        let n_filters = self.n_filters[pick(self.n_filters.len())];
        let ts_filter_length = self.ts_filter_length[pick(self.ts_filter_length.len())];
        TrialConfig { c, k, dropout_rate, learning_rate, hidden_layer_size, n_filters, ts_filter_length }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperbandParams {
    pub max_epochs: usize,
    pub hyperband_iterations: usize,
    pub factor: usize,
    /// Upper bound on sampled configurations.
    pub max_trials: usize,
}

impl Default for HyperbandParams {
    fn default() -> Self {
        Self { max_epochs: 10, hyperband_iterations: 1, factor: 3, max_trials: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfinConfig {
    pub fixed: FixedParams,
    pub tuned: SearchSpace,
    pub hyperband: HyperbandParams,
    pub ensemble_seeds: usize,
}

impl Default for MfinConfig {
    fn default() -> Self {
        Self {
            fixed: FixedParams::default(),
            tuned: SearchSpace::default(),
            hyperband: HyperbandParams::default(),
            ensemble_seeds: 10,
        }
    }
}

impl MfinConfig {
    pub fn validate(&self) -> Result<(), MfinError> {
        self.tuned.validate()?;
        let f = &self.fixed;
        if f.sequence_length < 2 || f.max_epochs == 0 || f.early_stopping == 0 {
            return Err(MfinError::Config("sequence length, epochs and patience must be positive"));
        }
        if !(f.valid_fraction > 0.0 && f.valid_fraction < 1.0) {
            return Err(MfinError::Config("validation fraction must lie in (0, 1)"));
        }
        if f.c_valid != 0.0 || f.k_valid != 0.0 {
            return Err(MfinError::Config("validation loss is scored without cost or correlation penalty"));
        }
        if self.hyperband.factor < 2 || self.hyperband.max_epochs == 0 || self.hyperband.hyperband_iterations == 0 {
            return Err(MfinError::Config("hyperband factor must be at least 2"));
        }
        if self.ensemble_seeds == 0 {
            return Err(MfinError::Config("ensemble needs at least one seed"));
        }
        if self.tuned.ts_filter_length.iter().any(|l| *l > f.sequence_length) {
            return Err(MfinError::Config("ts_filter_length exceeds the sequence length"));
        }
        Ok(())
    }
}

/// One point of the tuned grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub c: f64,
    pub k: f64,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub hidden_layer_size: usize,
    pub n_filters: usize,
    pub ts_filter_length: usize,
}

/// Model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_assets: usize,
    pub n_inputs: usize,
    pub n_filters: usize,
    pub filter_length: usize,
    pub hidden: usize,
}

impl Dims {
    pub fn new(trial: &TrialConfig, n_assets: usize, n_inputs: usize) -> Self {
        Self {
            n_assets,
            n_inputs,
            n_filters: trial.n_filters,
            filter_length: trial.ts_filter_length,
            hidden: trial.hidden_layer_size,
        }
    }
}
