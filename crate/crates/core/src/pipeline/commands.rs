//! Command drivers shared by the binary and the integration tests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::RunConfig;
use super::hybrid::{BackupContext, BackupRegistry, HybridClassifier, Stage};
use crate::dataset::{class_distribution, parse_corpus, Corpus, Polarity, SplitTag};
use crate::embeddings::{EmbeddingRegistry, EmbeddingSource};
use crate::error::{Error, Result};
use crate::hpo::{self, History, Sampler, SearchSpace};
use crate::model::{load_checkpoint, save_checkpoint, HierarchyGroupTrace, LcrRot, SentenceInput, VECTOR_NAMES};
use crate::ontology::{load_ontology, Ontology};
use crate::training::{evaluate, train_with, Evaluation, Example, Hyperparams};

fn write_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

/// `path` if given, else the supplied fallback writer.
fn with_output<T>(
    path: Option<&Path>,
    fallback: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> Result<T>,
) -> Result<T> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(file);
            let v = f(&mut w)?;
            w.flush().map_err(|e| Error::io(p, e))?;
            Ok(v)
        }
        None => f(fallback),
    }
}

fn json_line(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out).map_err(write_err)
}

fn load(cfg: &RunConfig, split: SplitTag) -> Result<Corpus> {
    parse_corpus(cfg.require(&cfg.corpus, "--corpus")?, split)
}

fn build_source(cfg: &RunConfig) -> Result<Box<dyn EmbeddingSource>> {
    EmbeddingRegistry::default().build(&cfg.embeddings)
}

pub fn examples(corpus: &Corpus, source: &dyn EmbeddingSource) -> Result<Vec<Example>> {
    corpus
        .iter()
        .map(|s| Ok((SentenceInput::from_sentence(source, s)?, s.polarity.index())))
        .collect()
}

fn load_ontology_or_bundled(cfg: &RunConfig) -> Result<Ontology> {
    match &cfg.ontology {
        Some(p) => load_ontology(p),
        None => Ok(Ontology::bundled()),
    }
}

/// Loads the checkpoint and checks it against the configured embeddings.
fn load_model(cfg: &RunConfig) -> Result<(LcrRot, Box<dyn EmbeddingSource>)> {
    let path = cfg.require(&cfg.checkpoint, "--checkpoint")?;
    let (model, spec) = load_checkpoint(path)?;
    if spec.kind != cfg.embeddings.kind {
        return Err(Error::config(format!(
            "checkpoint was trained on {:?} embeddings, configured {:?}",
            spec.kind, cfg.embeddings.kind
        )));
    }
    let source = build_source(cfg)?;
    if source.token_dim() != model.config().embed_dim || source.mixed_layers() != model.config().mixed_layers {
        return Err(Error::config(format!(
            "embeddings (dim {}, layers {:?}) do not match checkpoint (dim {}, layers {:?})",
            source.token_dim(),
            source.mixed_layers(),
            model.config().embed_dim,
            model.config().mixed_layers
        )));
    }
    Ok((model, source))
}

pub fn cmd_stats(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let corpus = load(cfg, SplitTag::Unspecified)?;
    let dist = class_distribution(&corpus)?;
    with_output(cfg.out.as_deref(), stdout, |out| {
        let w = |out: &mut dyn Write, line: String| writeln!(out, "{line}").map_err(write_err);
        w(out, format!("{:<10}{:>8}{:>9}", "polarity", "count", "percent"))?;
        for p in [Polarity::Positive, Polarity::Neutral, Polarity::Negative] {
            w(out, format!("{:<10}{:>8}{:>9.1}", p.as_str(), dist.count(p), dist.percent(p)))?;
        }
        w(out, format!("{:<10}{:>8}{:>9.1}", "total", dist.total, 100.0))
    })
}

fn build_model(cfg: &RunConfig, source: &dyn EmbeddingSource, hyper: &Hyperparams) -> Result<LcrRot> {
    let mut model_cfg = cfg.model_config(source.token_dim(), source.mixed_layers());
    model_cfg.dropout = hyper.dropout;
    let mut model = LcrRot::new(model_cfg)?;
    model.init_uniform(hyper.init_bound, &mut ChaCha8Rng::seed_from_u64(hyper.seed));
    Ok(model)
}

fn effective_hyper(cfg: &RunConfig) -> Hyperparams {
    Hyperparams {
        seed: cfg.seed,
        ..cfg.hyper.clone()
    }
}

/// Trains on `--corpus`, writes the epoch trace as JSON lines and saves the
/// model to `--checkpoint`.
pub fn cmd_train(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let ckpt = cfg.require(&cfg.checkpoint, "--checkpoint")?;
    let corpus = load(cfg, SplitTag::Train)?;
    let source = build_source(cfg)?;
    let data = examples(&corpus, source.as_ref())?;
    let hyper = effective_hyper(cfg);
    let mut model = build_model(cfg, source.as_ref(), &hyper)?;
    with_output(cfg.out.as_deref(), stdout, |out| {
        train_with(&mut model, &data, &hyper, |rec| json_line(out, rec)).map(|_| ())
    })?;
    save_checkpoint(ckpt, &model, &cfg.embeddings)?;
    if let Some(test) = &cfg.test_corpus {
        let test = parse_corpus(test, SplitTag::Test)?;
        let e = evaluate(&model, &examples(&test, source.as_ref())?)?;
        log::info!("test accuracy {:.4} on {} examples", e.accuracy, e.total);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Model,
    Hybrid,
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    mode: EvalMode,
    #[serde(flatten)]
    evaluation: &'a Evaluation,
    #[serde(skip_serializing_if = "Option::is_none")]
    ontology_stage: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    backup_stage: Option<usize>,
}

fn build_hybrid(cfg: &RunConfig) -> Result<HybridClassifier> {
    let ontology = load_ontology_or_bundled(cfg)?;
    let train = cfg
        .train_corpus
        .as_deref()
        .map(|p| parse_corpus(p, SplitTag::Train))
        .transpose()?;
    let ctx = BackupContext {
        checkpoint: cfg.checkpoint.clone(),
        embeddings: Some(cfg.embeddings.clone()),
        train: train.as_ref(),
    };
    let backup = BackupRegistry::default().build(&cfg.backup, &ctx)?;
    Ok(HybridClassifier::new(ontology, backup))
}

pub fn cmd_evaluate(cfg: &RunConfig, mode: EvalMode, stdout: &mut dyn Write) -> Result<()> {
    let corpus = load(cfg, SplitTag::Test)?;
    let report = match mode {
        EvalMode::Model => {
            let (model, source) = load_model(cfg)?;
            let e = evaluate(&model, &examples(&corpus, source.as_ref())?)?;
            (e, None, None)
        }
        EvalMode::Hybrid => {
            let hybrid = build_hybrid(cfg)?;
            let recs = hybrid.classify_corpus(&corpus)?;
            let onto = recs.iter().filter(|r| r.stage == Stage::Ontology).count();
            let e = Evaluation::from_pairs(recs.iter().map(|r| (r.gold.index(), r.polarity.index())))?;
            (e, Some(onto), Some(recs.len() - onto))
        }
    };
    with_output(cfg.out.as_deref(), stdout, |out| {
        json_line(
            out,
            &EvaluationReport {
                mode,
                evaluation: &report.0,
                ontology_stage: report.1,
                backup_stage: report.2,
            },
        )
    })
}

pub fn cmd_classify(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let corpus = load(cfg, SplitTag::Test)?;
    let hybrid = build_hybrid(cfg)?;
    with_output(cfg.out.as_deref(), stdout, |out| {
        for s in corpus.iter() {
            json_line(out, &hybrid.classify(s)?)?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct TuneSummary {
    trials: usize,
    failed: usize,
    best_accuracy: Option<f64>,
    best: Option<std::collections::BTreeMap<String, f64>>,
}

/// Hyperparameters for one tuning point over the default search space.
pub fn hyper_at(base: &Hyperparams, space: &SearchSpace, point: &[f64]) -> Hyperparams {
    let named = space.named(point);
    let get = |k: &str, d: f64| named.get(k).copied().unwrap_or(d);
    Hyperparams {
        learning_rate: get("learning_rate", base.learning_rate),
        momentum: get("momentum", base.momentum),
        l2: get("l2", base.l2),
        dropout: get("dropout", base.dropout),
        ..base.clone()
    }
}

/// TPE over learning rate, momentum, L2 and dropout, scored by accuracy on
/// a seeded hold-out of `--corpus`. Trials are appended to `--out` as JSON
/// lines; an existing file there is resumed.
pub fn cmd_tune(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let corpus = load(cfg, SplitTag::Train)?;
    let source = build_source(cfg)?;
    let mut data = examples(&corpus, source.as_ref())?;
    data.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_val = ((data.len() as f64) * cfg.tune.validation_fraction).round() as usize;
    if n_val == 0 || n_val >= data.len() {
        return Err(Error::config(format!(
            "corpus of {} sentences too small for a {} validation split",
            data.len(),
            cfg.tune.validation_fraction
        )));
    }
    let (val, train) = data.split_at(n_val);
    let space = SearchSpace::hyperparams();
    let base = effective_hyper(cfg);

    let history = match &cfg.out {
        Some(p) if p.exists() => hpo::load_history(p, &space)?,
        _ => History::default(),
    };
    let mut sink = match &cfg.out {
        Some(p) => Some(hpo::open_history_for_append(p)?),
        None => None,
    };
    let objective = |point: &[f64]| -> Result<f64> {
        let hyper = hyper_at(&base, &space, point);
        let mut model = build_model(cfg, source.as_ref(), &hyper)?;
        train_with(&mut model, train, &hyper, |_| Ok(()))?;
        Ok(evaluate(&model, val)?.accuracy)
    };
    let history = hpo::tune_with(
        &space,
        objective,
        cfg.tune.budget,
        &cfg.tune.tpe,
        cfg.seed,
        Sampler::Tpe,
        history,
        |i, t| match sink.as_mut() {
            Some(f) => hpo::write_trial(f, &space, i, t),
            None => Ok(()),
        },
    )?;
    let best = history.best();
    json_line(
        stdout,
        &TuneSummary {
            trials: history.len(),
            failed: history.trials.iter().filter(|t| t.objective.is_none()).count(),
            best_accuracy: best.and_then(|t| t.objective),
            best: best.map(|t| space.named(&t.point)),
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct AttentionRecord {
    pub sid: String,
    pub target: (usize, usize),
    pub hop: usize,
    pub side: String,
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    /// Rescale that applies to this hop's vectors: the same hop for per-hop
    /// methods, the final one otherwise. Absent for method 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchical: Option<Vec<HierarchyGroupTrace>>,
}

/// One JSON line per (sentence, hop, side); empty contexts are skipped.
pub fn cmd_dump_attention(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let corpus = load(cfg, SplitTag::Unspecified)?;
    let (model, source) = load_model(cfg)?;
    with_output(cfg.out.as_deref(), stdout, |out| {
        for s in corpus.iter() {
            let trace = model.attention_trace(&SentenceInput::from_sentence(source.as_ref(), s)?)?;
            let split = s.split();
            for h in &trace.hops {
                let hier = trace
                    .hierarchical
                    .iter()
                    .find(|r| r.after_hop >= h.hop)
                    .map(|r| r.groups.clone());
                let sides = [
                    (VECTOR_NAMES[0], h.left.as_ref(), &split.left),
                    (VECTOR_NAMES[1], h.right.as_ref(), &split.right),
                    (VECTOR_NAMES[2], Some(&h.target_left), &split.target),
                    (VECTOR_NAMES[3], Some(&h.target_right), &split.target),
                ];
                for (side, scores, tokens) in sides {
                    let Some(scores) = scores else { continue };
                    json_line(
                        out,
                        &AttentionRecord {
                            sid: s.sid.clone(),
                            target: s.target,
                            hop: h.hop,
                            side: side.to_string(),
                            tokens: tokens.clone(),
                            scores: scores.clone(),
                            hierarchical: hier.clone(),
                        },
                    )?;
                }
            }
        }
        Ok(())
    })
}
