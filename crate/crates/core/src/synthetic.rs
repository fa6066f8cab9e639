//! Keyword-separable toy corpora: the polarity of each sentence is fixed by
//! one sentiment keyword placed somewhere in its left or right context.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Corpus, Polarity, Sentence, SplitTag};
use crate::embeddings::{ContextualStore, NonContextualStore, OovPolicy};
use crate::error::Result;

pub const TARGETS: [&str; 6] = ["food", "service", "staff", "pizza", "waiter", "decor"];
pub const FILLERS: [&str; 10] = [
    "the", "was", "and", "a", "really", "very", "today", "here", "our", "it",
];
pub const NEGATIVE_KEYS: [&str; 2] = ["bad", "nasty"];
pub const NEUTRAL_KEYS: [&str; 2] = ["average", "ordinary"];
pub const POSITIVE_KEYS: [&str; 2] = ["good", "lovely"];

pub fn keywords(p: Polarity) -> &'static [&'static str] {
    match p {
        Polarity::Negative => &NEGATIVE_KEYS,
        Polarity::Neutral => &NEUTRAL_KEYS,
        Polarity::Positive => &POSITIVE_KEYS,
    }
}

/// `n` sentences with labels cycling negative, neutral, positive, so the
/// classes are balanced up to one.
pub fn keyword_sentences(n: usize, seed: u64, sid_prefix: &str) -> Result<Vec<Sentence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let polarity = Polarity::ALL[i % 3];
        let filler = |rng: &mut ChaCha8Rng, k: usize| -> Vec<String> {
            (0..k).map(|_| FILLERS.choose(rng).unwrap().to_string()).collect()
        };
        let (nl, nr) = (rng.gen_range(0..=3), rng.gen_range(0..=3));
        let mut left = filler(&mut rng, nl);
        let mut right = filler(&mut rng, nr);
        let key = keywords(polarity).choose(&mut rng).unwrap().to_string();
        if rng.gen_bool(0.5) {
            let at = rng.gen_range(0..=left.len());
            left.insert(at, key);
        } else {
            let at = rng.gen_range(0..=right.len());
            right.insert(at, key);
        }
        let target = TARGETS.choose(&mut rng).unwrap().to_string();
        let start = left.len();
        let mut tokens = left;
        tokens.push(target);
        tokens.extend(right);
        out.push(Sentence::new(
            format!("{sid_prefix}{i}"),
            tokens,
            (start, start + 1),
            "FOOD#QUALITY",
            polarity,
        )?);
    }
    Ok(out)
}

/// Train and test corpora drawn from independent streams.
pub fn keyword_corpora(n_train: usize, n_test: usize, seed: u64) -> Result<(Corpus, Corpus)> {
    let train = keyword_sentences(n_train, seed, "train-")?;
    let test = keyword_sentences(n_test, seed ^ 0x5eed_5eed, "test-")?;
    Ok((
        Corpus::new(train, SplitTag::Train, "synthetic")?,
        Corpus::new(test, SplitTag::Test, "synthetic")?,
    ))
}

/// Every word of the toy vocabulary with an i.i.d. U[-1, 1] vector.
pub fn keyword_embeddings(dim: usize, seed: u64) -> Result<NonContextualStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = NonContextualStore::new(dim, OovPolicy::Zero);
    let words = TARGETS
        .iter()
        .chain(&FILLERS)
        .chain(&NEGATIVE_KEYS)
        .chain(&NEUTRAL_KEYS)
        .chain(&POSITIVE_KEYS);
    for w in words {
        let v = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        store.insert(*w, v)?;
    }
    Ok(store)
}

/// Random per-occurrence layer vectors for every token of `corpus`, in
/// [-1, 1] rounded to 4 decimals so fixture files stay small.
pub fn random_contextual_store(corpus: &Corpus, layers: usize, dim: usize, seed: u64) -> Result<ContextualStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ContextualStore::new(layers, dim);
    for s in corpus.iter() {
        for tok in 0..s.tokens.len() {
            let ls = (0..layers)
                .map(|_| {
                    (0..dim)
                        .map(|_| (rng.gen_range(-1.0..=1.0f64) * 1e4).round() / 1e4)
                        .collect()
                })
                .collect();
            store.insert(s.sid.clone(), tok, ls)?;
        }
    }
    Ok(store)
}
