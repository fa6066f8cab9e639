//! Embedding sources behind one trait, built by name from an
//! [`EmbeddingSpec`].

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::combine::bert_combine;
use super::contextual::{load_contextual, ContextualStore};
use super::noncontextual::{load_noncontextual, NonContextualStore, OovPolicy};
use crate::dataset::Sentence;
use crate::error::{Error, Result};

/// Per-token model input: either a ready vector or raw layers the model
/// mixes itself.
#[derive(Clone, Debug, PartialEq)]
pub enum TokenFeatures {
    Vector(Vec<f64>),
    Layers(Vec<Vec<f64>>),
}

pub trait EmbeddingSource: Send + Sync {
    fn kind(&self) -> &'static str;

    /// Length of the vector the encoder sees per token.
    fn token_dim(&self) -> usize;

    /// Layer count when the downstream model learns the layer mix.
    fn mixed_layers(&self) -> Option<usize> {
        None
    }

    /// Features for every token of `sentence`, in order.
    fn features(&self, sentence: &Sentence) -> Result<Vec<TokenFeatures>>;
}

pub struct StaticEmbeddings {
    store: NonContextualStore,
}

impl StaticEmbeddings {
    pub fn new(store: NonContextualStore) -> Self {
        StaticEmbeddings { store }
    }

    pub fn store(&self) -> &NonContextualStore {
        &self.store
    }
}

impl EmbeddingSource for StaticEmbeddings {
    fn kind(&self) -> &'static str {
        "static"
    }

    fn token_dim(&self) -> usize {
        self.store.dim()
    }

    fn features(&self, sentence: &Sentence) -> Result<Vec<TokenFeatures>> {
        Ok(sentence
            .tokens
            .iter()
            .map(|t| TokenFeatures::Vector(self.store.lookup(t)))
            .collect())
    }
}

fn occurrence_layers<'a>(store: &'a ContextualStore, s: &Sentence, tok: usize) -> Result<&'a [Vec<f64>]> {
    store.layers(&s.sid, tok).ok_or_else(|| {
        Error::config(format!(
            "contextual store has no vectors for sid {} token {tok}",
            s.sid
        ))
    })
}

/// Sum of the last four layers per occurrence.
pub struct BertEmbeddings {
    store: ContextualStore,
}

impl BertEmbeddings {
    pub fn new(store: ContextualStore) -> Result<Self> {
        if store.layer_count() < super::combine::BERT_SUMMED_LAYERS {
            return Err(Error::config(format!(
                "BERT-style store needs at least 4 layers, has {}",
                store.layer_count()
            )));
        }
        Ok(BertEmbeddings { store })
    }
}

impl EmbeddingSource for BertEmbeddings {
    fn kind(&self) -> &'static str {
        "bert"
    }

    fn token_dim(&self) -> usize {
        self.store.dim()
    }

    fn features(&self, sentence: &Sentence) -> Result<Vec<TokenFeatures>> {
        (0..sentence.tokens.len())
            .map(|i| {
                let layers = occurrence_layers(&self.store, sentence, i)?;
                Ok(TokenFeatures::Vector(bert_combine(layers)?))
            })
            .collect()
    }
}

/// Raw layers; the model owns the learned layer mix.
pub struct ElmoEmbeddings {
    store: ContextualStore,
}

impl ElmoEmbeddings {
    pub fn new(store: ContextualStore) -> Self {
        ElmoEmbeddings { store }
    }
}

impl EmbeddingSource for ElmoEmbeddings {
    fn kind(&self) -> &'static str {
        "elmo"
    }

    fn token_dim(&self) -> usize {
        self.store.dim()
    }

    fn mixed_layers(&self) -> Option<usize> {
        Some(self.store.layer_count())
    }

    fn features(&self, sentence: &Sentence) -> Result<Vec<TokenFeatures>> {
        (0..sentence.tokens.len())
            .map(|i| Ok(TokenFeatures::Layers(occurrence_layers(&self.store, sentence, i)?.to_vec())))
            .collect()
    }
}

/// How to obtain embeddings for a run. `path` is omitted from checkpoints;
/// the caller supplies it again at load time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub oov: OovPolicy,
}

impl EmbeddingSpec {
    pub fn hashed(dim: usize, seed: u64) -> Self {
        EmbeddingSpec {
            kind: "hashed".into(),
            path: None,
            dim: Some(dim),
            oov: OovPolicy::Hashed { seed },
        }
    }

    fn require_path(&self) -> Result<&PathBuf> {
        self.path
            .as_ref()
            .ok_or_else(|| Error::config(format!("embedding kind {:?} needs a file path", self.kind)))
    }
}

type Builder = fn(&EmbeddingSpec) -> Result<Box<dyn EmbeddingSource>>;

/// Name → constructor table for embedding sources.
pub struct EmbeddingRegistry {
    builders: BTreeMap<&'static str, Builder>,
}

impl Default for EmbeddingRegistry {
    fn default() -> Self {
        let mut r = EmbeddingRegistry {
            builders: BTreeMap::new(),
        };
        r.register("static", |spec| {
            let store = load_noncontextual(spec.require_path()?, spec.dim, spec.oov)?;
            Ok(Box::new(StaticEmbeddings::new(store)))
        });
        r.register("hashed", |spec| {
            let dim = spec
                .dim
                .ok_or_else(|| Error::config("hashed embeddings need a dimension"))?;
            if dim == 0 {
                return Err(Error::config("embedding dimension must be positive"));
            }
            let store = NonContextualStore::new(dim, spec.oov);
            Ok(Box::new(StaticEmbeddings::new(store)))
        });
        r.register("bert", |spec| {
            let store = load_contextual(spec.require_path()?)?;
            Ok(Box::new(BertEmbeddings::new(store)?))
        });
        r.register("elmo", |spec| {
            let store = load_contextual(spec.require_path()?)?;
            Ok(Box::new(ElmoEmbeddings::new(store)))
        });
        r
    }
}

impl EmbeddingRegistry {
    pub fn register(&mut self, name: &'static str, builder: Builder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.builders.keys().copied()
    }

    pub fn build(&self, spec: &EmbeddingSpec) -> Result<Box<dyn EmbeddingSource>> {
        let builder = self.builders.get(spec.kind.as_str()).ok_or_else(|| {
            Error::config(format!(
                "unknown embedding kind {:?}; known: {}",
                spec.kind,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        let source = builder(spec)?;
        if let Some(d) = spec.dim {
            if d != source.token_dim() {
                return Err(Error::config(format!(
                    "embedding dimension {} does not match expected {d}",
                    source.token_dim()
                )));
            }
        }
        Ok(source)
    }
}
