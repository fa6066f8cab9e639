//! Non-contextual and contextual token embeddings, layer combiners and a
//! toy GloVe trainer.

pub mod combine;
pub mod contextual;
pub mod glove;
pub mod noncontextual;
pub mod source;

pub use combine::{bert_combine, elmo_combine, ElmoWeights};
pub use contextual::{load_contextual, ContextualRecord, ContextualStore};
pub use glove::{
    build_cooccurrence, glove_cost, glove_train, CooccurrenceTable, GloveModel, GloveRun, GloveTrainConfig,
    GloveWeighting,
};
pub use noncontextual::{load_noncontextual, NonContextualStore, OovPolicy};
pub use source::{
    BertEmbeddings, ElmoEmbeddings, EmbeddingRegistry, EmbeddingSource, EmbeddingSpec, StaticEmbeddings, TokenFeatures,
};
