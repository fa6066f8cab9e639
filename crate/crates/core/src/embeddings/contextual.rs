//! Per-occurrence layer vectors produced offline by a contextual language
//! model. One JSON object per line:
//!
//! ```text
//! {"sid": "s1", "tok": 0, "layers": [[...H reals...], ...]}
//! ```
//!
//! Layer order is model layer 1 → L (or 0 → L when the extractor also
//! writes the token-embedding layer).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Corpus;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContextualRecord {
    pub sid: String,
    pub tok: usize,
    pub layers: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ContextualStore {
    layer_count: usize,
    dim: usize,
    occurrences: HashMap<(String, usize), Vec<Vec<f64>>>,
}

impl ContextualStore {
    pub fn new(layer_count: usize, dim: usize) -> Self {
        ContextualStore {
            layer_count,
            dim,
            occurrences: HashMap::new(),
        }
    }

    pub fn layer_count(&self) -> usize {
        self.layer_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.occurrences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occurrences.is_empty()
    }

    pub fn insert(&mut self, sid: impl Into<String>, tok: usize, layers: Vec<Vec<f64>>) -> Result<()> {
        let sid = sid.into();
        if layers.len() != self.layer_count {
            return Err(Error::validation(
                format!("sid {sid} token {tok}"),
                format!("{} layers, expected {}", layers.len(), self.layer_count),
            ));
        }
        if let Some(bad) = layers.iter().find(|l| l.len() != self.dim) {
            return Err(Error::validation(
                format!("sid {sid} token {tok}"),
                format!("layer of length {}, expected {}", bad.len(), self.dim),
            ));
        }
        self.occurrences.insert((sid, tok), layers);
        Ok(())
    }

    pub fn layers(&self, sid: &str, tok: usize) -> Option<&[Vec<f64>]> {
        self.occurrences
            .get(&(sid.to_string(), tok))
            .map(Vec::as_slice)
    }

    /// Checks that every sentence of `corpus` has exactly one record per
    /// token index.
    pub fn validate_against(&self, corpus: &Corpus) -> Result<()> {
        let mut lengths: HashMap<&str, usize> = HashMap::new();
        for s in corpus.iter() {
            lengths.insert(&s.sid, s.tokens.len());
        }
        for (sid, &n) in &lengths {
            for tok in 0..n {
                if !self.occurrences.contains_key(&(sid.to_string(), tok)) {
                    return Err(Error::validation(
                        format!("sid {sid}"),
                        format!("no contextual vectors for token {tok}"),
                    ));
                }
            }
        }
        for (sid, tok) in self.occurrences.keys() {
            if let Some(&n) = lengths.get(sid.as_str()) {
                if *tok >= n {
                    return Err(Error::validation(
                        format!("sid {sid}"),
                        format!("token index {tok} beyond sentence length {n}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Writes records sorted by (sid, tok).
    pub fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let mut keys: Vec<&(String, usize)> = self.occurrences.keys().collect();
        keys.sort();
        for key in keys {
            let rec = ContextualRecord {
                sid: key.0.clone(),
                tok: key.1,
                layers: self.occurrences[key].clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn load_contextual(path: &Path) -> Result<ContextualStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut store: Option<ContextualStore> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let located = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: ContextualRecord = serde_json::from_str(&line).map_err(|e| located(e.to_string()))?;
        let store = match &mut store {
            Some(s) => s,
            slot @ None => {
                let dim = rec.layers.first().map_or(0, Vec::len);
                if dim == 0 {
                    return Err(located("record has no layer vectors".into()));
                }
                slot.insert(ContextualStore::new(rec.layers.len(), dim))
            }
        };
        if store.occurrences.contains_key(&(rec.sid.clone(), rec.tok)) {
            return Err(located(format!("duplicate record for sid {} token {}", rec.sid, rec.tok)));
        }
        store
            .insert(rec.sid, rec.tok, rec.layers)
            .map_err(|e| located(e.to_string()))?;
    }
    store.ok_or_else(|| Error::config(format!("{}: no contextual records", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Polarity, Sentence, SplitTag};

    #[test]
    fn round_trip_and_alignment() {
        let mut store = ContextualStore::new(2, 3);
        store.insert("s1", 0, vec![vec![1.0, 2.0, 3.0], vec![0.5, 0.25, -1.0]]).unwrap();
        store.insert("s1", 1, vec![vec![0.1, 0.2, 0.3], vec![4.0, 5.0, 6.0]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ctx.jsonl");
        store.write(&p).unwrap();
        let loaded = load_contextual(&p).unwrap();
        assert_eq!(loaded.layer_count(), 2);
        assert_eq!(loaded.layers("s1", 1).unwrap(), store.layers("s1", 1).unwrap());

        let s = Sentence::new("s1", vec!["a".into(), "b".into()], (0, 1), "FOOD", Polarity::Positive).unwrap();
        let corpus = Corpus::new(vec![s.clone()], SplitTag::Test, "mem").unwrap();
        loaded.validate_against(&corpus).unwrap();

        let mut longer = s;
        longer.tokens.push("c".into());
        let corpus = Corpus::new(vec![longer], SplitTag::Test, "mem").unwrap();
        assert!(loaded.validate_against(&corpus).is_err());
    }

    #[test]
    fn ragged_layers_rejected() {
        let mut store = ContextualStore::new(2, 3);
        assert!(store.insert("s", 0, vec![vec![1.0, 2.0, 3.0]]).is_err());
        assert!(store.insert("s", 0, vec![vec![1.0, 2.0, 3.0], vec![1.0]]).is_err());
    }
}
