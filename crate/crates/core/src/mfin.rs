//! Multi-factor inception network: model, loss, training, search and
//! ensembling.

mod config;
mod hyperband;
mod loss;
mod model;
mod train;

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::ingest::{make_model_inputs, model_features, FactorPanel, IngestError};
use crate::strategies::WeightsMatrix;

pub use config::{Dims, FixedParams, HyperbandParams, MfinConfig, SearchSpace, TrialConfig};
pub use hyperband::{hyperband_search, schedule, Bracket, HyperbandResult, Rung, TrialRecord};
pub use loss::{benchmark, sharpe_loss, LossOutput, DEGENERATE_LOSS};
pub use model::{param_count, MfinModel, ModelIds, ParamCount};
pub use train::{train, validation_loss, EpochLog, TrainData, TrainOutcome, TrainSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MfinError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("insufficient data: {0}")]
    Data(&'static str),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("non-finite loss at epoch {epoch} (batch {batch:?})")]
    NonFinite { epoch: usize, batch: Option<usize> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// One training window: `x: (T, N_A, N_I)`, `y1`, `y2: (T, N_A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub y1: Tensor,
    pub y2: Tensor,
    /// Decision index of the last row.
    pub end: usize,
}

impl Batch {
    pub fn from_inputs(m: crate::ingest::ModelInputs) -> Self {
        Self {
            x: Tensor::new(&[m.len, m.n_assets, m.n_features], m.x),
            y1: Tensor::new(&[m.len, m.n_assets], m.y1),
            y2: Tensor::new(&[m.len, m.n_assets], m.y2),
            end: m.end,
        }
    }
}

/// Non-overlapping windows of `len` decisions inside `decisions`, oldest
/// first. Windows lacking history or a realised target are skipped.
pub fn training_windows(panel: &FactorPanel, decisions: Range<usize>, len: usize, open: usize) -> Result<Vec<Batch>, MfinError> {
    if len < 2 {
        return Err(MfinError::Config("sequence length must be at least 2"));
    }
    let first_end = (decisions.start + len - 1).max(len + 1);
    let last_end = decisions.end.min(panel.len().saturating_sub(1));
    let mut out = Vec::new();
    let mut e = first_end;
    while e < last_end {
        out.push(Batch::from_inputs(make_model_inputs(panel, e, len, open)?));
        e += len;
    }
    Ok(out)
}

/// Positions for `decisions` (other rows zero). Each chunk of `len`
/// decisions is scored from a full window ending at its last decision.
pub fn predict_weights<F>(
    panel: &FactorPanel,
    decisions: Range<usize>,
    len: usize,
    label: &str,
    mut predict: F,
) -> Result<WeightsMatrix, MfinError>
where
    F: FnMut(&Tensor) -> Result<Tensor, MfinError>,
{
    let (na, ni) = (panel.n_assets(), panel.n_features());
    let mut w = WeightsMatrix::zeros(panel.len(), na, label);
    if decisions.end > panel.len() || decisions.start < len + 1 {
        return Err(MfinError::Data("prediction range lacks history"));
    }
    let mut start = decisions.start;
    while start < decisions.end {
        let stop = (start + len).min(decisions.end);
        let end = stop - 1;
        let x = Tensor::new(&[len, na, ni], model_features(panel, end, len)?);
        let y = predict(&x)?;
        for d in start..stop {
            let row = len - 1 - (end - d);
            for i in 0..na {
                w.set(d, i, y.data[row * na + i]);
            }
        }
        start = stop;
    }
    Ok(w)
}

/// Members trained from different seeds on one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEnsemble {
    pub trial: TrialConfig,
    pub members: Vec<MfinModel>,
}

impl TrainedEnsemble {
    /// Mean of member positions.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, MfinError> {
        let mut acc: Option<Tensor> = None;
        for m in &self.members {
            let y = m.predict(x)?;
            match &mut acc {
                Some(a) => a.data.iter_mut().zip(&y.data).for_each(|(s, v)| *s += v),
                None => acc = Some(y),
            }
        }
        let mut a = acc.ok_or(MfinError::Data("empty ensemble"))?;
        let n = self.members.len() as f64;
        a.data.iter_mut().for_each(|v| *v /= n);
        Ok(a)
    }
}
