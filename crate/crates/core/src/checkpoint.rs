//! JSON checkpoints of trained networks.
//!
//! Values are stored as 64-bit numbers printed in shortest round-trip form, so
//! saving and loading reproduces every parameter bit for bit at either
//! precision.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::tensor::{Precision, Real, Tensor};

pub const FORMAT: &str = "csna-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub precision: Precision,
    pub config: ModelConfig,
    /// Master seed of the run.
    pub seed: u64,
    /// Substream tag that drove dropout and edge sampling.
    pub rng_tag: String,
    pub epoch: usize,
    pub val_accuracy: f64,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model<R: Real>(model: &Model<R>, seed: u64, rng_tag: &str, epoch: usize, val_accuracy: f64) -> Self {
        let params = model
            .params
            .named()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                rows: t.rows(),
                cols: t.cols(),
                data: t.data().iter().map(|v| v.to_f64_lossless()).collect(),
            })
            .collect();
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            precision: if R::NAME == "f32" { Precision::F32 } else { Precision::F64 },
            config: model.config,
            seed,
            rng_tag: rng_tag.to_string(),
            epoch,
            val_accuracy,
            params,
        }
    }

    /// Rebuilds the network at precision `R`.
    pub fn to_model<R: Real>(&self) -> Result<Model<R>> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::contract(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut params = ModelParams::<Tensor<R>>::zeros_like(&self.config)?;
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.params.len() {
            return Err(Error::contract(format!(
                "checkpoint has {} tensors, config needs {}",
                self.params.len(),
                names.len()
            )));
        }
        for ((slot, name), stored) in params.tensors_mut().into_iter().zip(&names).zip(&self.params) {
            if &stored.name != name || (stored.rows, stored.cols) != slot.shape() {
                return Err(Error::contract(format!(
                    "checkpoint tensor {} [{}x{}] does not match {name} {:?}",
                    stored.name,
                    stored.rows,
                    stored.cols,
                    slot.shape()
                )));
            }
            let data = stored.data.iter().map(|&v| R::from_f64_lossy(v)).collect();
            *slot = Tensor::from_vec(stored.rows, stored.cols, data)?;
        }
        Ok(Model {
            config: self.config,
            params,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::dataset::write(path.as_ref(), &self.to_json()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, Some(e.line()), e.to_string()))
    }
}
