use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 3;
pub const DEFAULT_HOPS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Per-token input dimension d_e.
    pub embed_dim: usize,
    /// Hidden size d of each LSTM direction; hidden states are 2d wide.
    pub hidden_dim: usize,
    pub hops: usize,
    /// Hierarchical attention method, 0 (none) to 4.
    pub method: u8,
    pub dropout: f64,
    /// Layer count of a learned contextual layer mix, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixed_layers: Option<usize>,
}

impl ModelConfig {
    pub fn new(embed_dim: usize, hidden_dim: usize) -> Self {
        ModelConfig {
            embed_dim,
            hidden_dim,
            hops: DEFAULT_HOPS,
            method: 0,
            dropout: 0.0,
            mixed_layers: None,
        }
    }

    pub fn with_hops(mut self, hops: usize) -> Self {
        self.hops = hops;
        self
    }

    pub fn with_method(mut self, method: u8) -> Self {
        self.method = method;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn with_mixed_layers(mut self, layers: Option<usize>) -> Self {
        self.mixed_layers = layers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::config("embedding and hidden dimensions must be positive"));
        }
        if self.hops == 0 {
            return Err(Error::config("hop count must be at least 1"));
        }
        if self.method > 4 {
            return Err(Error::config(format!(
                "hierarchical method {} not in 0..=4",
                self.method
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.mixed_layers == Some(0) {
            return Err(Error::config("layer mix needs at least one layer"));
        }
        Ok(())
    }

    /// Width of one hidden state, 2d.
    pub fn state_dim(&self) -> usize {
        2 * self.hidden_dim
    }
}
