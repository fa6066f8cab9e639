//! Shared helpers: an independent plain-loop forward pass used as an
//! oracle, and toy data builders.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use haabsa_core::dataset::{Corpus, Polarity, Sentence};
use haabsa_core::ontology::{InconclusiveReason, Outcome};
use haabsa_core::embeddings::{EmbeddingSource, StaticEmbeddings};
use haabsa_core::model::{LcrRot, SentenceInput};
use haabsa_core::numerics::ParamStore;
use haabsa_core::synthetic::{keyword_corpora, keyword_embeddings};
use haabsa_core::training::Example;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn random_input(l: usize, t: usize, r: usize, de: usize, seed: u64) -> SentenceInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vs = (0..l + t + r)
        .map(|_| (0..de).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    SentenceInput::from_vectors(vs, (l, l + t))
}

pub fn to_examples(corpus: &Corpus, source: &dyn EmbeddingSource) -> Vec<Example> {
    corpus
        .iter()
        .map(|s| (SentenceInput::from_sentence(source, s).unwrap(), s.polarity.index()))
        .collect()
}

/// Keyword-separable train/test examples over U[-1, 1] word vectors.
pub fn toy_examples(n_train: usize, n_test: usize, dim: usize, seed: u64) -> (Vec<Example>, Vec<Example>) {
    let (train, test) = keyword_corpora(n_train, n_test, seed).unwrap();
    let source = StaticEmbeddings::new(keyword_embeddings(dim, seed + 1).unwrap());
    (to_examples(&train, &source), to_examples(&test, &source))
}

// ---- ontology -----------------------------------------------------------

const NO_HIT: Outcome = Outcome::Inconclusive(InconclusiveReason::NoHit);
const CONFLICT: Outcome = Outcome::Inconclusive(InconclusiveReason::Conflict);

/// Sentence whose first token is the target.
pub fn sentence(text: &str, category: &str) -> Sentence {
    let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
    Sentence::new("s", tokens, (0, 1), category, Polarity::Neutral).unwrap()
}

/// Hand-built cases for the bundled ontology: text, category, outcome and
/// the rules that fire.
pub const ONTOLOGY_CASES: [(&str, &str, Outcome, &[u8]); 12] = [
    ("the pizza was great", "FOOD#QUALITY", Outcome::Positive, &[1]),
    ("terrible service tonight", "SERVICE#GENERAL", Outcome::Negative, &[1]),
    ("the pasta was delicious", "FOOD#QUALITY", Outcome::Positive, &[2]),
    ("delicious wine list", "DRINKS#QUALITY", NO_HIT, &[]),
    ("a rude waiter", "SERVICE#GENERAL", Outcome::Negative, &[2]),
    ("cheap prices", "PRICE#GENERAL", Outcome::Positive, &[3]),
    ("cheap decor", "AMBIENCE#GENERAL", Outcome::Negative, &[3]),
    ("cheap staff", "SERVICE#GENERAL", NO_HIT, &[]),
    ("great pizza but bland pasta", "FOOD#QUALITY", CONFLICT, &[1, 2]),
    ("Service was Top Notch", "SERVICE#GENERAL", Outcome::Positive, &[1]),
    ("a long wait at the bar", "SERVICE#GENERAL", Outcome::Negative, &[3]),
    ("cold drinks and cold beer", "DRINKS#QUALITY", Outcome::Positive, &[3]),
];

// ---- oracle -------------------------------------------------------------

struct Params<'a>(&'a ParamStore);

impl Params<'_> {
    fn mat(&self, name: &str) -> Vec<Vec<f64>> {
        let p = self.0.get(self.0.id(name).unwrap_or_else(|| panic!("missing {name}")));
        let (r, c) = (p.value.shape()[0], p.value.shape()[1]);
        (0..r).map(|i| p.value.data()[i * c..(i + 1) * c].to_vec()).collect()
    }

    fn vec(&self, name: &str) -> Vec<f64> {
        let p = self.0.get(self.0.id(name).unwrap_or_else(|| panic!("missing {name}")));
        p.value.data().to_vec()
    }
}

fn mv(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn lstm(p: &Params, prefix: &str, xs: &[Vec<f64>], hidden: usize) -> Vec<Vec<f64>> {
    let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
    let mut out = Vec::new();
    for x in xs {
        let gate = |g: &str| -> Vec<f64> {
            let wx = mv(&p.mat(&format!("{prefix}.W_{g}")), x);
            let uh = mv(&p.mat(&format!("{prefix}.U_{g}")), &h);
            let b = p.vec(&format!("{prefix}.b_{g}"));
            (0..hidden).map(|k| wx[k] + uh[k] + b[k]).collect()
        };
        let (i, f, o, g) = (gate("i"), gate("f"), gate("o"), gate("g"));
        for k in 0..hidden {
            c[k] = sig(f[k]) * c[k] + sig(i[k]) * g[k].tanh();
            h[k] = sig(o[k]) * c[k].tanh();
        }
        out.push(h.clone());
    }
    out
}

fn bilstm(p: &Params, prefix: &str, xs: &[Vec<f64>], hidden: usize) -> Vec<Vec<f64>> {
    let fwd = lstm(p, &format!("{prefix}.fwd"), xs, hidden);
    let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
    let mut bwd = lstm(p, &format!("{prefix}.bwd"), &rev, hidden);
    bwd.reverse();
    fwd.into_iter().zip(bwd).map(|(mut f, b)| {
        f.extend(b);
        f
    }).collect()
}

/// Returns (α, pooled).
fn attend(p: &Params, head: &str, hs: &[Vec<f64>], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let wq = mv(&p.mat(&format!("attn.{head}.W")), q);
    let b = p.vec(&format!("attn.{head}.b"))[0];
    let f: Vec<f64> = hs
        .iter()
        .map(|h| (h.iter().zip(&wq).map(|(a, c)| a * c).sum::<f64>() + b).tanh())
        .collect();
    let a = softmax(&f);
    let mut pooled = vec![0.0; q.len()];
    for (ai, h) in a.iter().zip(hs) {
        for (o, x) in pooled.iter_mut().zip(h) {
            *o += ai * x;
        }
    }
    (a, pooled)
}

fn rescale(p: &Params, method: u8, v: &mut [Vec<f64>; 4]) {
    let groups: Vec<(&str, Vec<usize>)> = match method {
        1 | 2 => vec![("all", vec![0, 1, 2, 3])],
        3 | 4 => vec![("context", vec![0, 1]), ("target", vec![2, 3])],
        _ => vec![],
    };
    for (g, members) in groups {
        let w = p.mat(&format!("hier.{g}.W"));
        let b = p.vec(&format!("hier.{g}.b"))[0];
        let f: Vec<f64> = members.iter().map(|&m| (mv(&w, &v[m])[0] + b).tanh()).collect();
        let a = softmax(&f);
        for (k, &m) in members.iter().enumerate() {
            v[m].iter_mut().for_each(|x| *x *= a[k]);
        }
    }
}

/// Class probabilities computed with plain loops from the named
/// parameters of `model`. Plain-vector inputs only.
pub fn oracle_forward(model: &LcrRot, input: &SentenceInput) -> Vec<f64> {
    let cfg = model.config();
    let p = Params(model.store());
    let xs: Vec<Vec<f64>> = input
        .tokens
        .iter()
        .map(|t| match t {
            haabsa_core::embeddings::TokenFeatures::Vector(v) => v.clone(),
            _ => panic!("oracle takes plain vectors"),
        })
        .collect();
    let (s, e) = input.target;
    let d = cfg.hidden_dim;
    let hl = bilstm(&p, "lstm.left", &xs[..s], d);
    let ht = bilstm(&p, "lstm.target", &xs[s..e], d);
    let hr = bilstm(&p, "lstm.right", &xs[e..], d);
    let mut rtp = vec![0.0; 2 * d];
    for h in &ht {
        for (o, x) in rtp.iter_mut().zip(h) {
            *o += x / ht.len() as f64;
        }
    }
    let per_hop = matches!(cfg.method, 2 | 4);
    let (mut ql, mut qr) = (rtp.clone(), rtp);
    let mut v: [Vec<f64>; 4] = Default::default();
    for _ in 0..cfg.hops {
        let rl = if hl.is_empty() { vec![0.0; 2 * d] } else { attend(&p, "left", &hl, &ql).1 };
        let rr = if hr.is_empty() { vec![0.0; 2 * d] } else { attend(&p, "right", &hr, &qr).1 };
        let tl = attend(&p, "target_left", &ht, &rl).1;
        let tr = attend(&p, "target_right", &ht, &rr).1;
        v = [rl, rr, tl, tr];
        if per_hop {
            rescale(&p, cfg.method, &mut v);
        }
        ql = v[2].clone();
        qr = v[3].clone();
    }
    if matches!(cfg.method, 1 | 3) {
        rescale(&p, cfg.method, &mut v);
    }
    let x: Vec<f64> = v.concat();
    let b = p.vec("out.b");
    let logits: Vec<f64> = mv(&p.mat("out.W"), &x).iter().zip(&b).map(|(a, c)| a + c).collect();
    softmax(&logits)
}
