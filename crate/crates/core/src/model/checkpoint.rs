//! JSON checkpoints: model config, embedding spec (without its path) and
//! every parameter by name.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::lcr_rot::LcrRot;
use crate::embeddings::EmbeddingSpec;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "lcr-rot-hop";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub embedding: EmbeddingSpec,
    pub params: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_model(model: &LcrRot, embedding: &EmbeddingSpec) -> Self {
        let mut embedding = embedding.clone();
        embedding.path = None;
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config().clone(),
            embedding,
            params: model
                .store()
                .iter()
                .map(|(_, p)| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Rebuilds the model, insisting on exactly the expected parameter
    /// names and shapes.
    pub fn into_model(self) -> Result<LcrRot> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::validation(
                "checkpoint",
                format!(
                    "unsupported format {:?} version {}",
                    self.format, self.version
                ),
            ));
        }
        let mut model = LcrRot::new(self.config)?;
        let mut params = self.params;
        for p in model.store_mut().iter_mut() {
            let value = params.remove(&p.name).ok_or_else(|| {
                Error::validation("checkpoint", format!("missing parameter {}", p.name))
            })?;
            if value.shape() != p.value.shape() {
                return Err(Error::validation(
                    "checkpoint",
                    format!(
                        "parameter {} has shape {:?}, expected {:?}",
                        p.name,
                        value.shape(),
                        p.value.shape()
                    ),
                ));
            }
            if !value.is_finite() {
                return Err(Error::validation(
                    "checkpoint",
                    format!("parameter {} has non-finite values", p.name),
                ));
            }
            p.value = value;
        }
        if let Some(extra) = params.keys().next() {
            return Err(Error::validation(
                "checkpoint",
                format!("unexpected parameter {extra}"),
            ));
        }
        Ok(model)
    }
}

pub fn save_checkpoint(path: &Path, model: &LcrRot, embedding: &EmbeddingSpec) -> Result<()> {
    let ckpt = Checkpoint::from_model(model, embedding);
    let text = serde_json::to_string(&ckpt)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(LcrRot, EmbeddingSpec)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let embedding = ckpt.embedding.clone();
    Ok((ckpt.into_model()?, embedding))
}
