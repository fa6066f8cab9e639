//! Mixing per-layer contextual vectors into one token vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::softmax;

/// Number of final layers summed for BERT-style stores.
pub const BERT_SUMMED_LAYERS: usize = 4;

/// Task-specific layer mix `γ · Σ_j s_j h_j`.
///
/// `raw` holds the pre-softmax layer scores; the normalized weights always
/// sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElmoWeights {
    pub raw: Vec<f64>,
    pub gamma: f64,
}

impl ElmoWeights {
    /// Uniform mix over `layers` with γ = 1.
    pub fn uniform(layers: usize) -> Self {
        ElmoWeights {
            raw: vec![0.0; layers],
            gamma: 1.0,
        }
    }

    /// Weights that reproduce the given (positive) mix exactly after
    /// normalization.
    pub fn from_normalized(weights: &[f64], gamma: f64) -> Result<Self> {
        if weights.iter().any(|&w| w < 0.0) || weights.is_empty() {
            return Err(Error::config("layer weights must be nonnegative and nonempty"));
        }
        Ok(ElmoWeights {
            raw: weights.iter().map(|w| w.ln()).collect(),
            gamma,
        })
    }

    pub fn normalized(&self) -> Vec<f64> {
        softmax(&self.raw).unwrap_or_default()
    }

    pub fn layer_count(&self) -> usize {
        self.raw.len()
    }
}

pub fn elmo_combine(layers: &[Vec<f64>], weights: &ElmoWeights) -> Result<Vec<f64>> {
    if layers.len() != weights.layer_count() {
        return Err(Error::config(format!(
            "{} layers supplied but weights cover {}",
            layers.len(),
            weights.layer_count()
        )));
    }
    let dim = layers.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for (layer, s) in layers.iter().zip(weights.normalized()) {
        if layer.len() != dim {
            return Err(Error::Dimension {
                op: "elmo_combine",
                left: vec![dim],
                right: vec![layer.len()],
            });
        }
        for (o, x) in out.iter_mut().zip(layer) {
            *o += s * x;
        }
    }
    out.iter_mut().for_each(|o| *o *= weights.gamma);
    Ok(out)
}

/// Elementwise sum of the last four layers.
pub fn bert_combine(layers: &[Vec<f64>]) -> Result<Vec<f64>> {
    if layers.len() < BERT_SUMMED_LAYERS {
        return Err(Error::config(format!(
            "BERT combination needs at least {BERT_SUMMED_LAYERS} layers, got {}",
            layers.len()
        )));
    }
    let tail = &layers[layers.len() - BERT_SUMMED_LAYERS..];
    let dim = tail[0].len();
    let mut out = vec![0.0; dim];
    for layer in tail {
        if layer.len() != dim {
            return Err(Error::Dimension {
                op: "bert_combine",
                left: vec![dim],
                right: vec![layer.len()],
            });
        }
        for (o, x) in out.iter_mut().zip(layer) {
            *o += x;
        }
    }
    Ok(out)
}
