//! Toy GloVe: co-occurrence counting and weighted least squares on
//! `w_iᵀw_k + b_i + b_k ≈ log X_ik`, with one vector and one bias per word.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `f(x) = min(1, (x / x_max)^alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GloveWeighting {
    pub x_max: f64,
    pub alpha: f64,
}

impl Default for GloveWeighting {
    fn default() -> Self {
        GloveWeighting {
            x_max: 100.0,
            alpha: 0.75,
        }
    }
}

impl GloveWeighting {
    /// Constant weight 1 for every observed pair.
    pub fn unit() -> Self {
        GloveWeighting {
            x_max: f64::MIN_POSITIVE,
            alpha: 0.0,
        }
    }

    pub fn weight(&self, x: f64) -> f64 {
        if x >= self.x_max {
            1.0
        } else {
            (x / self.x_max).powf(self.alpha).min(1.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceTable {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    /// Dense row-major V×V counts.
    counts: Vec<f64>,
    pub window: usize,
}

impl CooccurrenceTable {
    pub fn from_counts(vocab: Vec<String>, counts: Vec<f64>, window: usize) -> Result<Self> {
        let v = vocab.len();
        if counts.len() != v * v {
            return Err(Error::Dimension {
                op: "cooccurrence",
                left: vec![v, v],
                right: vec![counts.len()],
            });
        }
        if counts.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::config("co-occurrence counts must be finite and nonnegative"));
        }
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(CooccurrenceTable {
            vocab,
            index,
            counts,
            window,
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn count(&self, i: usize, k: usize) -> f64 {
        self.counts[i * self.len() + k]
    }

    pub fn count_words(&self, a: &str, b: &str) -> f64 {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(k)) => self.count(i, k),
            _ => 0.0,
        }
    }

    /// Nonzero entries as `(i, k, X_ik)`.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let v = self.len();
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(move |(idx, &x)| (idx / v, idx % v, x))
    }
}

/// Adds 1 to `X_ik` for every ordered pair of positions at distance
/// `1..=window` within a sequence.
pub fn build_cooccurrence(corpus: &[Vec<String>], window: usize) -> Result<CooccurrenceTable> {
    if window == 0 {
        return Err(Error::config("co-occurrence window must be at least 1"));
    }
    let mut vocab: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for seq in corpus {
        for w in seq {
            if !index.contains_key(w) {
                index.insert(w.clone(), vocab.len());
                vocab.push(w.clone());
            }
        }
    }
    let v = vocab.len();
    let mut counts = vec![0.0; v * v];
    for seq in corpus {
        let ids: Vec<usize> = seq.iter().map(|w| index[w]).collect();
        for (p, &i) in ids.iter().enumerate() {
            let lo = p.saturating_sub(window);
            let hi = (p + window).min(ids.len().saturating_sub(1));
            for (q, &k) in ids.iter().enumerate().take(hi + 1).skip(lo) {
                if q != p {
                    counts[i * v + k] += 1.0;
                }
            }
        }
    }
    CooccurrenceTable::from_counts(vocab, counts, window)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GloveModel {
    pub vocab: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl GloveModel {
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn prediction(&self, i: usize, k: usize) -> f64 {
        let dot: f64 = self.vectors[i]
            .iter()
            .zip(&self.vectors[k])
            .map(|(a, b)| a * b)
            .sum();
        dot + self.biases[i] + self.biases[k]
    }
}

pub fn glove_cost(model: &GloveModel, table: &CooccurrenceTable, weighting: GloveWeighting) -> f64 {
    table
        .nonzero()
        .map(|(i, k, x)| {
            let r = model.prediction(i, k) - x.ln();
            weighting.weight(x) * r * r
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GloveTrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub weighting: GloveWeighting,
}

#[derive(Clone, Debug)]
pub struct GloveRun {
    pub model: GloveModel,
    /// Cost at initialization followed by the cost after each epoch.
    pub trace: Vec<f64>,
}

/// Full-batch gradient descent on the weighted least-squares cost.
pub fn glove_train(table: &CooccurrenceTable, config: &GloveTrainConfig) -> Result<GloveRun> {
    if config.dim == 0 {
        return Err(Error::config("GloVe dimension must be at least 1"));
    }
    let v = table.len();
    let d = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 0.5 / d as f64;
    let mut model = GloveModel {
        vocab: table.vocab().to_vec(),
        vectors: (0..v)
            .map(|_| (0..d).map(|_| rng.gen_range(-bound..=bound)).collect())
            .collect(),
        biases: vec![0.0; v],
    };
    let pairs: Vec<(usize, usize, f64, f64)> = table
        .nonzero()
        .map(|(i, k, x)| (i, k, x.ln(), config.weighting.weight(x)))
        .collect();

    let mut trace = vec![glove_cost(&model, table, config.weighting)];
    for epoch in 1..=config.epochs {
        let mut gw = vec![vec![0.0; d]; v];
        let mut gb = vec![0.0; v];
        for &(i, k, log_x, f) in &pairs {
            let g = 2.0 * f * (model.prediction(i, k) - log_x);
            for j in 0..d {
                gw[i][j] += g * model.vectors[k][j];
                gw[k][j] += g * model.vectors[i][j];
            }
            gb[i] += g;
            gb[k] += g;
        }
        for i in 0..v {
            for j in 0..d {
                model.vectors[i][j] -= config.learning_rate * gw[i][j];
            }
            model.biases[i] -= config.learning_rate * gb[i];
        }
        let cost = glove_cost(&model, table, config.weighting);
        if !cost.is_finite() {
            return Err(Error::Divergence {
                epoch,
                example: 0,
                loss: cost,
            });
        }
        trace.push(cost);
    }
    Ok(GloveRun { model, trace })
}
