//! Multi-hop LCR-Rot: three bi-LSTMs over left context, target and right
//! context, `n` hops of rotatory attention, optional hierarchical attention,
//! and an affine softmax head over the concatenated four vectors.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attend, AttentionHead};
use super::config::{ModelConfig, NUM_CLASSES};
use super::hierarchy::{GroupParams, GroupScores, HierarchyRegistry, HierarchyStrategy};
use super::lstm::BiLstmParams;
use crate::dataset::Sentence;
use crate::embeddings::{EmbeddingSource, TokenFeatures};
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamKind, ParamStore, Tape, Tensor, Var};

/// Canonical order of the four pooled vectors.
pub const VECTOR_NAMES: [&str; 4] = ["left", "right", "target_left", "target_right"];

/// Model-ready features of one sentence/target pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceInput {
    pub tokens: Vec<TokenFeatures>,
    /// Half-open target span within `tokens`.
    pub target: (usize, usize),
}

impl SentenceInput {
    pub fn from_sentence(source: &dyn EmbeddingSource, s: &Sentence) -> Result<Self> {
        Ok(SentenceInput {
            tokens: source.features(s)?,
            target: s.target,
        })
    }

    /// Input built from plain vectors, one per token.
    pub fn from_vectors(vectors: Vec<Vec<f64>>, target: (usize, usize)) -> Self {
        SentenceInput {
            tokens: vectors.into_iter().map(TokenFeatures::Vector).collect(),
            target,
        }
    }

    pub fn lengths(&self) -> (usize, usize, usize) {
        let (s, e) = self.target;
        (s, e - s, self.tokens.len() - e)
    }
}

pub enum Mode<'a> {
    Inference,
    Training(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Training(_))
    }
}

#[derive(Clone, Debug)]
pub struct LayerMixParams {
    /// Pre-softmax layer scores.
    pub scores: ParamId,
    pub gamma: ParamId,
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub mix: Option<LayerMixParams>,
    pub left: BiLstmParams,
    pub target: BiLstmParams,
    pub right: BiLstmParams,
    /// Heads in canonical order: left, right, target_left, target_right.
    pub heads: [AttentionHead; 4],
    pub hierarchy: Vec<GroupParams>,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// Hidden-state sequences of the three encoders.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub left: Vec<Var>,
    pub target: Vec<Var>,
    pub right: Vec<Var>,
}

/// One rotatory hop: the four pooled vectors before any rescale and the
/// attention distributions that produced them (`None` for empty contexts).
#[derive(Clone, Debug)]
pub struct HopOutput {
    pub vectors: [Var; 4],
    pub left_scores: Option<Var>,
    pub right_scores: Option<Var>,
    pub target_left_scores: Var,
    pub target_right_scores: Var,
}

#[derive(Clone, Debug)]
pub struct HierarchyRecord {
    /// 1-based hop after which the rescale ran.
    pub after_hop: usize,
    pub groups: Vec<GroupScores>,
}

#[derive(Clone, Debug)]
pub struct MultiHopOutput {
    /// Vectors fed to the head (rescaled when a method applies).
    pub vectors: [Var; 4],
    pub hops: Vec<HopOutput>,
    pub hierarchy: Vec<HierarchyRecord>,
}

#[derive(Clone, Debug)]
pub struct Forward {
    pub probs: Var,
    pub encoded: Encoded,
    pub multi_hop: MultiHopOutput,
}

#[derive(Clone)]
pub struct LcrRot {
    config: ModelConfig,
    store: ParamStore,
    params: ModelParams,
    strategy: Arc<dyn HierarchyStrategy>,
}

impl std::fmt::Debug for LcrRot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LcrRot")
            .field("config", &self.config)
            .field("strategy", &self.strategy.name())
            .field("parameters", &self.store.num_values())
            .finish()
    }
}

impl LcrRot {
    /// Model with all weights and biases zero (layer mix uniform, γ = 1).
    pub fn new(config: ModelConfig) -> Result<Self> {
        Self::with_registry(config, &HierarchyRegistry::default())
    }

    pub fn with_registry(config: ModelConfig, registry: &HierarchyRegistry) -> Result<Self> {
        config.validate()?;
        let strategy = registry.get(config.method)?;
        let (de, d, sd) = (config.embed_dim, config.hidden_dim, config.state_dim());
        let mut store = ParamStore::new();

        let mix = config.mixed_layers.map(|layers| LayerMixParams {
            scores: store.add("mix.s", Tensor::zeros(&[layers]), ParamKind::Mixing),
            gamma: store.add("mix.gamma", Tensor::scalar(1.0), ParamKind::Mixing),
        });
        let left = BiLstmParams::register(&mut store, "lstm.left", de, d);
        let target = BiLstmParams::register(&mut store, "lstm.target", de, d);
        let right = BiLstmParams::register(&mut store, "lstm.right", de, d);
        let heads = VECTOR_NAMES.map(|n| AttentionHead::register(&mut store, &format!("attn.{n}"), sd));
        let hierarchy = strategy.register(&mut store, sd);
        let head_w = store.add("out.W", Tensor::zeros(&[NUM_CLASSES, 4 * sd]), ParamKind::Weight);
        let head_b = store.add("out.b", Tensor::zeros(&[NUM_CLASSES]), ParamKind::Bias);

        Ok(LcrRot {
            config,
            store,
            params: ModelParams {
                mix,
                left,
                target,
                right,
                heads,
                hierarchy,
                head_w,
                head_b,
            },
            strategy,
        })
    }

    pub fn init_uniform<R: Rng>(&mut self, bound: f64, rng: &mut R) {
        self.store.init_uniform(bound, rng);
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn strategy(&self) -> &dyn HierarchyStrategy {
        self.strategy.as_ref()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn check_input(&self, input: &SentenceInput) -> Result<()> {
        let (s, e) = input.target;
        if s >= e || e > input.tokens.len() {
            return Err(Error::validation(
                "model input",
                format!("target span [{s},{e}) invalid for {} tokens", input.tokens.len()),
            ));
        }
        for tok in &input.tokens {
            match (tok, self.config.mixed_layers) {
                (TokenFeatures::Vector(v), None) if v.len() == self.config.embed_dim => {}
                (TokenFeatures::Layers(ls), Some(n))
                    if ls.len() == n && ls.iter().all(|l| l.len() == self.config.embed_dim) => {}
                _ => {
                    return Err(Error::config(format!(
                        "token features do not match model input (embed_dim {}, mixed layers {:?})",
                        self.config.embed_dim, self.config.mixed_layers
                    )))
                }
            }
        }
        Ok(())
    }

    fn embed(&self, tape: &mut Tape, store: &ParamStore, tok: &TokenFeatures) -> Result<Var> {
        match (tok, &self.params.mix) {
            (TokenFeatures::Vector(v), _) => Ok(tape.input(Tensor::vector(v.clone()))),
            (TokenFeatures::Layers(layers), Some(mix)) => {
                let s = tape.param(store, mix.scores);
                let gamma = tape.param(store, mix.gamma);
                let weights = tape.softmax(s)?;
                let vars: Vec<Var> = layers.iter().map(|l| tape.input(Tensor::vector(l.clone()))).collect();
                let mixed = tape.weighted_sum(weights, &vars)?;
                tape.scale(mixed, gamma)
            }
            (TokenFeatures::Layers(_), None) => Err(Error::config(
                "layered token features need a model with a learned layer mix",
            )),
        }
    }

    /// Runs the three bi-LSTMs. Hidden states pass through dropout in
    /// training mode.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &SentenceInput,
        mode: &mut Mode<'_>,
    ) -> Result<Encoded> {
        self.check_input(input)?;
        let (s, e) = input.target;
        let embedded = input
            .tokens
            .iter()
            .map(|t| self.embed(tape, store, t))
            .collect::<Result<Vec<Var>>>()?;
        let mut run = |params: &BiLstmParams, xs: &[Var]| -> Result<Vec<Var>> {
            let hs = params.encode(tape, store, xs)?;
            hs.into_iter()
                .map(|h| self.dropout(tape, h, mode))
                .collect()
        };
        Ok(Encoded {
            left: run(&self.params.left, &embedded[..s])?,
            target: run(&self.params.target, &embedded[s..e])?,
            right: run(&self.params.right, &embedded[e..])?,
        })
    }

    fn dropout(&self, tape: &mut Tape, v: Var, mode: &mut Mode<'_>) -> Result<Var> {
        match mode {
            Mode::Inference => Ok(v),
            Mode::Training(rng) => tape.dropout(v, self.config.dropout, &mut **rng, true),
        }
    }

    /// Target2context for both sides, then context2target with the fresh
    /// context vectors as queries. An empty context contributes a zero
    /// vector.
    pub fn rotatory_hop(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        enc: &Encoded,
        query_left: Var,
        query_right: Var,
    ) -> Result<HopOutput> {
        let [h_left, h_right, h_tl, h_tr] = &self.params.heads;
        let sd = self.config.state_dim();
        let mut context = |hidden: &[Var], head: &AttentionHead, query: Var| -> Result<(Var, Option<Var>)> {
            if hidden.is_empty() {
                Ok((tape.input(Tensor::zeros(&[sd])), None))
            } else {
                let a = attend(tape, store, head, hidden, query)?;
                Ok((a.pooled, Some(a.scores)))
            }
        };
        let (r_l, left_scores) = context(&enc.left, h_left, query_left)?;
        let (r_r, right_scores) = context(&enc.right, h_right, query_right)?;
        let t_l = attend(tape, store, h_tl, &enc.target, r_l)?;
        let t_r = attend(tape, store, h_tr, &enc.target, r_r)?;
        Ok(HopOutput {
            vectors: [r_l, r_r, t_l.pooled, t_r.pooled],
            left_scores,
            right_scores,
            target_left_scores: t_l.scores,
            target_right_scores: t_r.scores,
        })
    }

    pub fn hierarchical_rescale(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        vectors: [Var; 4],
    ) -> Result<([Var; 4], Vec<GroupScores>)> {
        self.strategy
            .rescale(tape, store, &self.params.hierarchy, vectors)
    }

    /// `n` hops. Hop 1 queries both contexts with the mean-pooled target;
    /// later hops use the previous hop's `r^{t_l}` / `r^{t_r}`.
    pub fn multi_hop(&self, tape: &mut Tape, store: &ParamStore, enc: &Encoded) -> Result<MultiHopOutput> {
        let target_pool = tape.mean_pool(&enc.target)?;
        let (mut q_left, mut q_right) = (target_pool, target_pool);
        let mut hops = Vec::with_capacity(self.config.hops);
        let mut hierarchy = Vec::new();
        let mut vectors = [target_pool; 4];
        for hop in 1..=self.config.hops {
            let out = self.rotatory_hop(tape, store, enc, q_left, q_right)?;
            vectors = out.vectors;
            if self.strategy.per_hop() {
                let (scaled, groups) = self.hierarchical_rescale(tape, store, vectors)?;
                vectors = scaled;
                hierarchy.push(HierarchyRecord { after_hop: hop, groups });
            }
            q_left = vectors[2];
            q_right = vectors[3];
            hops.push(out);
        }
        if !self.strategy.per_hop() && !self.strategy.groups().is_empty() {
            let (scaled, groups) = self.hierarchical_rescale(tape, store, vectors)?;
            vectors = scaled;
            hierarchy.push(HierarchyRecord {
                after_hop: self.config.hops,
                groups,
            });
        }
        Ok(MultiHopOutput {
            vectors,
            hops,
            hierarchy,
        })
    }

    /// Class probabilities (negative, neutral, positive) on the tape.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &SentenceInput,
        mut mode: Mode<'_>,
    ) -> Result<Forward> {
        let encoded = self.encode(tape, store, input, &mut mode)?;
        let multi_hop = self.multi_hop(tape, store, &encoded)?;
        let x = tape.concat(&multi_hop.vectors)?;
        let x = self.dropout(tape, x, &mut mode)?;
        let w = tape.param(store, self.params.head_w);
        let b = tape.param(store, self.params.head_b);
        let logits = tape.matvec(w, x)?;
        let logits = tape.add(logits, b)?;
        let probs = tape.softmax(logits)?;
        Ok(Forward {
            probs,
            encoded,
            multi_hop,
        })
    }

    pub fn forward(&self, tape: &mut Tape, input: &SentenceInput, mode: Mode<'_>) -> Result<Forward> {
        self.forward_with(tape, &self.store, input, mode)
    }

    pub fn predict(&self, input: &SentenceInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, input, Mode::Inference)?;
        Ok(tape.value(fwd.probs).data().to_vec())
    }

    pub fn attention_trace(&self, input: &SentenceInput) -> Result<AttentionTrace> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, input, Mode::Inference)?;
        let read = |v: Var| tape.value(v).data().to_vec();
        let hops = fwd
            .multi_hop
            .hops
            .iter()
            .enumerate()
            .map(|(i, h)| HopTrace {
                hop: i + 1,
                left: h.left_scores.map(read),
                right: h.right_scores.map(read),
                target_left: read(h.target_left_scores),
                target_right: read(h.target_right_scores),
            })
            .collect();
        let hierarchical = fwd
            .multi_hop
            .hierarchy
            .iter()
            .map(|r| HierarchyTrace {
                after_hop: r.after_hop,
                groups: r
                    .groups
                    .iter()
                    .map(|g| HierarchyGroupTrace {
                        vectors: g.members.iter().map(|&m| VECTOR_NAMES[m].to_string()).collect(),
                        alpha: g.alpha.clone(),
                    })
                    .collect(),
            })
            .collect();
        Ok(AttentionTrace {
            method: self.config.method,
            probabilities: read(fwd.probs),
            hops,
            hierarchical,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopTrace {
    pub hop: usize,
    /// Scores over left-context tokens; absent when the context is empty.
    pub left: Option<Vec<f64>>,
    pub right: Option<Vec<f64>>,
    /// Scores over target tokens queried by the left context vector.
    pub target_left: Vec<f64>,
    pub target_right: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyGroupTrace {
    pub vectors: Vec<String>,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyTrace {
    pub after_hop: usize,
    pub groups: Vec<HierarchyGroupTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub method: u8,
    pub probabilities: Vec<f64>,
    pub hops: Vec<HopTrace>,
    pub hierarchical: Vec<HierarchyTrace>,
}
