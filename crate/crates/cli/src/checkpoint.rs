//! Model checkpoints as JSON: dimensions plus a list of named tensors.

use serde::{Deserialize, Serialize};

use mfin_core::autodiff::{ParamStore, Tensor};
use mfin_core::mfin::{Dims, MfinModel, TrialConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dims: Dims,
    pub trial: TrialConfig,
    pub seed: u64,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &MfinModel, trial: &TrialConfig) -> Self {
        let tensors = model
            .params
            .iter()
            .map(|(name, t)| NamedTensor { name: name.to_string(), shape: t.shape.clone(), data: t.data.clone() })
            .collect();
        Self { dims: model.dims, trial: *trial, seed: model.seed, tensors }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn into_model(self) -> Result<MfinModel> {
        let mut store = ParamStore::new();
        for t in self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(CliError::Data(format!("checkpoint tensor {} has {} values for shape {:?}", t.name, t.data.len(), t.shape)));
            }
            store.add(&t.name, Tensor::new(&t.shape, t.data));
        }
        Ok(MfinModel::from_params(self.dims, self.trial.dropout_rate, self.seed, store)?)
    }
}
