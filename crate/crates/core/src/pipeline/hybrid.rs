//! Two-step classification: the ontology answers when it can, a backup
//! classifier handles every inconclusive verdict.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, Polarity, Sentence};
use crate::embeddings::{EmbeddingRegistry, EmbeddingSource, EmbeddingSpec};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, LcrRot, SentenceInput};
use crate::numerics::tensor::argmax;
use crate::ontology::{Hit, InconclusiveReason, Ontology, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ontology,
    Backup,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackupPrediction {
    pub polarity: Polarity,
    pub probabilities: Option<Vec<f64>>,
}

pub trait BackupClassifier: Send + Sync {
    fn name(&self) -> &'static str;

    fn classify(&self, sentence: &Sentence) -> Result<BackupPrediction>;
}

/// Argmax of the network's class probabilities.
pub struct ModelBackup {
    pub model: LcrRot,
    pub source: Box<dyn EmbeddingSource>,
}

impl ModelBackup {
    pub fn new(model: LcrRot, source: Box<dyn EmbeddingSource>) -> Result<Self> {
        let want = model.config().embed_dim;
        if source.token_dim() != want {
            return Err(Error::config(format!(
                "embedding dimension {} does not match model input {want}",
                source.token_dim()
            )));
        }
        if source.mixed_layers() != model.config().mixed_layers {
            return Err(Error::config(format!(
                "embedding layer mix {:?} does not match model {:?}",
                source.mixed_layers(),
                model.config().mixed_layers
            )));
        }
        Ok(ModelBackup { model, source })
    }
}

impl BackupClassifier for ModelBackup {
    fn name(&self) -> &'static str {
        "model"
    }

    fn classify(&self, sentence: &Sentence) -> Result<BackupPrediction> {
        let input = SentenceInput::from_sentence(self.source.as_ref(), sentence)?;
        let probs = self.model.predict(&input)?;
        Ok(BackupPrediction {
            polarity: Polarity::from_index(argmax(&probs))?,
            probabilities: Some(probs),
        })
    }
}

/// Assigns one fixed label, the training split's most frequent polarity.
pub struct MajorityBackup {
    pub label: Polarity,
}

impl MajorityBackup {
    pub fn from_train(train: &Corpus) -> Result<Self> {
        Ok(MajorityBackup {
            label: train.majority_label()?,
        })
    }
}

impl BackupClassifier for MajorityBackup {
    fn name(&self) -> &'static str {
        "majority"
    }

    fn classify(&self, _: &Sentence) -> Result<BackupPrediction> {
        Ok(BackupPrediction {
            polarity: self.label,
            probabilities: None,
        })
    }
}

/// What a backup builder may draw on.
#[derive(Default)]
pub struct BackupContext<'a> {
    pub checkpoint: Option<PathBuf>,
    /// Overrides the embedding spec recorded in the checkpoint (usually
    /// just to supply the file path again).
    pub embeddings: Option<EmbeddingSpec>,
    pub train: Option<&'a Corpus>,
}

type BackupBuilder = Arc<dyn Fn(&BackupContext<'_>) -> Result<Box<dyn BackupClassifier>> + Send + Sync>;

pub struct BackupRegistry {
    builders: BTreeMap<String, BackupBuilder>,
}

impl Default for BackupRegistry {
    fn default() -> Self {
        let mut r = BackupRegistry {
            builders: BTreeMap::new(),
        };
        r.register("model", |ctx| {
            let path = ctx
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::config("backup \"model\" needs a checkpoint"))?;
            let (model, mut spec) = load_checkpoint(path)?;
            if let Some(over) = &ctx.embeddings {
                if over.kind != spec.kind {
                    return Err(Error::config(format!(
                        "checkpoint was trained on {:?} embeddings, not {:?}",
                        spec.kind, over.kind
                    )));
                }
                spec = EmbeddingSpec {
                    dim: over.dim.or(spec.dim),
                    ..over.clone()
                };
            }
            let source = EmbeddingRegistry::default().build(&spec)?;
            Ok(Box::new(ModelBackup::new(model, source)?))
        });
        r.register("majority", |ctx| {
            let train = ctx
                .train
                .ok_or_else(|| Error::config("backup \"majority\" needs a training corpus"))?;
            Ok(Box::new(MajorityBackup::from_train(train)?))
        });
        r
    }
}

impl BackupRegistry {
    pub fn register(
        &mut self,
        name: &str,
        builder: impl Fn(&BackupContext<'_>) -> Result<Box<dyn BackupClassifier>> + Send + Sync + 'static,
    ) {
        self.builders.insert(name.to_string(), Arc::new(builder));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, ctx: &BackupContext<'_>) -> Result<Box<dyn BackupClassifier>> {
        let b = self.builders.get(name).ok_or_else(|| {
            Error::config(format!(
                "unknown backup {name:?}; known: {}",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        b(ctx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sid: String,
    pub target: (usize, usize),
    pub stage: Stage,
    pub polarity: Polarity,
    pub gold: Polarity,
    pub hits: Vec<Hit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inconclusive: Option<InconclusiveReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

pub struct HybridClassifier {
    pub ontology: Ontology,
    pub backup: Box<dyn BackupClassifier>,
}

impl HybridClassifier {
    pub fn new(ontology: Ontology, backup: Box<dyn BackupClassifier>) -> Self {
        HybridClassifier { ontology, backup }
    }

    pub fn classify(&self, sentence: &Sentence) -> Result<PredictionRecord> {
        let verdict = self.ontology.classify(sentence);
        let mut rec = PredictionRecord {
            sid: sentence.sid.clone(),
            target: sentence.target,
            stage: Stage::Ontology,
            polarity: Polarity::Neutral,
            gold: sentence.polarity,
            hits: verdict.hits,
            inconclusive: None,
            probabilities: None,
        };
        match verdict.outcome {
            Outcome::Positive => rec.polarity = Polarity::Positive,
            Outcome::Negative => rec.polarity = Polarity::Negative,
            Outcome::Inconclusive(reason) => {
                let b = self.backup.classify(sentence)?;
                rec.stage = Stage::Backup;
                rec.polarity = b.polarity;
                rec.inconclusive = Some(reason);
                rec.probabilities = b.probabilities;
            }
        }
        Ok(rec)
    }

    pub fn classify_corpus(&self, corpus: &Corpus) -> Result<Vec<PredictionRecord>> {
        corpus.iter().map(|s| self.classify(s)).collect()
    }
}
