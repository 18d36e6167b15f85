use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{Dims, TrialConfig};
use super::loss::sharpe_loss;
use super::model::MfinModel;
use super::{Batch, MfinError};
use crate::autodiff::{AdamState, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub max_epochs: usize,
    pub patience: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: MfinModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid: f64,
}

/// Chronological training windows and held-out validation windows.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Vec<Batch>,
    pub valid: Vec<Batch>,
}

impl TrainData {
    /// Keeps order; the last `fraction` of windows (at least one) validate.
    pub fn split(windows: Vec<Batch>, fraction: f64) -> Result<Self, MfinError> {
        if windows.len() < 2 {
            return Err(MfinError::Data("need at least two windows to train and validate"));
        }
        let n_valid = (libm::ceil(windows.len() as f64 * fraction) as usize).clamp(1, windows.len() - 1);
        let mut train = windows;
        let valid = train.split_off(train.len() - n_valid);
        Ok(Self { train, valid })
    }

    pub fn n_assets(&self) -> usize {
        self.train[0].x.shape[1]
    }

    pub fn n_inputs(&self) -> usize {
        self.train[0].x.shape[2]
    }
}

/// Mean validation loss with no cost and no correlation penalty.
pub fn validation_loss(model: &MfinModel, batches: &[Batch]) -> Result<f64, MfinError> {
    let mut total = 0.0;
    for b in batches {
        let mut g = Graph::new();
        let w = model.forward(&mut g, &b.x)?;
        let out = sharpe_loss(&mut g, w, b, 0.0, 0.0);
        total += g.value(out.loss).item();
    }
    Ok(total / batches.len() as f64)
}

fn dropout_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed ^ ((epoch as u64) << 32) ^ (batch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One Adam step per training window in chronological order; stops after
/// `patience` epochs without a strictly lower validation loss.
pub fn train(trial: &TrialConfig, data: &TrainData, seed: u64, settings: TrainSettings) -> Result<TrainOutcome, MfinError> {
    let dims = Dims::new(trial, data.n_assets(), data.n_inputs());
    let mut model = MfinModel::new(dims, trial.dropout_rate, seed)?;
    let mut adam = AdamState::new(&model.params, trial.learning_rate);
    let mut best = (validation_loss(&model, &data.valid)?, 0usize, model.params.clone());
    if !best.0.is_finite() {
        return Err(MfinError::NonFinite { epoch: 0, batch: None });
    }
    let mut log = Vec::new();
    let mut stale = 0;
    for epoch in 1..=settings.max_epochs {
        let mut train_loss = 0.0;
        for (bi, b) in data.train.iter().enumerate() {
            let mut g = Graph::training(dropout_seed(seed, epoch, bi));
            let w = model.forward(&mut g, &b.x)?;
            let out = sharpe_loss(&mut g, w, b, trial.c, trial.k);
            let l = g.value(out.loss).item();
            if !l.is_finite() {
                return Err(MfinError::NonFinite { epoch, batch: Some(bi) });
            }
            train_loss += l;
            let grads = g.backward(out.loss).param_grads(&model.params);
            if grads.iter().any(|t| t.data.iter().any(|v| !v.is_finite())) {
                return Err(MfinError::NonFinite { epoch, batch: Some(bi) });
            }
            adam.update(&mut model.params, &grads);
        }
        let valid_loss = validation_loss(&model, &data.valid)?;
        if !valid_loss.is_finite() {
            return Err(MfinError::NonFinite { epoch, batch: None });
        }
        log.push(EpochLog { epoch, train_loss: train_loss / data.train.len() as f64, valid_loss, lr: adam.lr });
        if valid_loss < best.0 {
            best = (valid_loss, epoch, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= settings.patience {
                break;
            }
        }
    }
    let (best_valid, best_epoch, params) = best;
    model.params = params;
    Ok(TrainOutcome { model, log, best_epoch, best_valid })
}
