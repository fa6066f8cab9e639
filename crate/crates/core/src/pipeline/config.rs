//! Run configuration: defaults, then an optional JSON file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingSpec;
use crate::error::{Error, Result};
use crate::hpo::TpeConfig;
use crate::model::{ModelConfig, DEFAULT_HOPS};
use crate::training::Hyperparams;

pub const DEFAULT_EMBED_DIM: usize = 16;
pub const DEFAULT_HIDDEN_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSettings {
    pub budget: usize,
    /// Fraction of the training corpus held out for validation.
    pub validation_fraction: f64,
    pub tpe: TpeConfig,
}

impl Default for TuneSettings {
    fn default() -> Self {
        TuneSettings {
            budget: 20,
            validation_fraction: 0.2,
            tpe: TpeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    /// Training split, used for majority backups and held-out reports.
    pub train_corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub embeddings: EmbeddingSpec,
    pub ontology: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub method: u8,
    pub hops: usize,
    pub hidden_dim: usize,
    pub backup: String,
    pub out: Option<PathBuf>,
    pub hyper: Hyperparams,
    pub tune: TuneSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            corpus: None,
            train_corpus: None,
            test_corpus: None,
            embeddings: EmbeddingSpec::hashed(DEFAULT_EMBED_DIM, 0),
            ontology: None,
            checkpoint: None,
            method: 4,
            hops: DEFAULT_HOPS,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            backup: "model".into(),
            out: None,
            hyper: Hyperparams::default(),
            tune: TuneSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Model shape for an embedding source of width `embed_dim`.
    pub fn model_config(&self, embed_dim: usize, mixed_layers: Option<usize>) -> ModelConfig {
        ModelConfig::new(embed_dim, self.hidden_dim)
            .with_hops(self.hops)
            .with_method(self.method)
            .with_dropout(self.hyper.dropout)
            .with_mixed_layers(mixed_layers)
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        field
            .as_deref()
            .ok_or_else(|| Error::config(format!("{flag} is required for this command")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.method > 4 {
            return Err(Error::config(format!("method {} not in 0..=4", self.method)));
        }
        if self.hops == 0 {
            return Err(Error::config("hops must be at least 1"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("hidden dimension must be positive"));
        }
        if !(self.tune.validation_fraction > 0.0 && self.tune.validation_fraction < 1.0) {
            return Err(Error::config("validation fraction must lie in (0, 1)"));
        }
        self.hyper.validate()?;
        self.tune.tpe.validate()
    }
}
