use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What `lookup` returns for tokens missing from the store.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OovPolicy {
    Zero,
    /// Uniform in [-0.1, 0.1], seeded by a hash of the token and `seed`.
    Hashed { seed: u64 },
}

impl Default for OovPolicy {
    fn default() -> Self {
        OovPolicy::Hashed { seed: 0 }
    }
}

pub const HASHED_OOV_BOUND: f64 = 0.1;

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn hashed_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ seed);
    (0..dim)
        .map(|_| rng.gen_range(-HASHED_OOV_BOUND..=HASHED_OOV_BOUND))
        .collect()
}

#[derive(Clone, Debug)]
pub struct NonContextualStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    oov: OovPolicy,
}

impl NonContextualStore {
    pub fn new(dim: usize, oov: OovPolicy) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        NonContextualStore {
            dim,
            vectors: HashMap::new(),
            oov,
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                op: "embedding insert",
                left: vec![self.dim],
                right: vec![vector.len()],
            });
        }
        self.vectors.insert(token.into(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov
    }

    pub fn set_oov_policy(&mut self, oov: OovPolicy) {
        self.oov = oov;
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    pub fn lookup(&self, token: &str) -> Vec<f64> {
        match self.vectors.get(token) {
            Some(v) => v.clone(),
            None => match self.oov {
                OovPolicy::Zero => vec![0.0; self.dim],
                OovPolicy::Hashed { seed } => hashed_vector(token, self.dim, seed),
            },
        }
    }

    /// Writes `token v1 … vd` lines, sorted by token. Values use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let mut tokens: Vec<&String> = self.vectors.keys().collect();
        tokens.sort();
        for t in tokens {
            let mut line = t.clone();
            for x in &self.vectors[t] {
                line.push(' ');
                line.push_str(&x.to_string());
            }
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads a whitespace-separated text embedding file. The dimension comes
/// from the first row unless `expected_dim` is given.
pub fn load_noncontextual(path: &Path, expected_dim: Option<usize>, oov: OovPolicy) -> Result<NonContextualStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut store: Option<NonContextualStore> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("{f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(parse_err(format!("token {token:?} has no vector")));
        }
        let store = match &mut store {
            Some(s) => s,
            slot @ None => {
                if let Some(d) = expected_dim {
                    if d != values.len() {
                        return Err(Error::config(format!(
                            "{}: expected {d}-dimensional vectors, file has {}",
                            path.display(),
                            values.len()
                        )));
                    }
                }
                slot.insert(NonContextualStore::new(values.len(), oov))
            }
        };
        if values.len() != store.dim {
            return Err(parse_err(format!(
                "token {token:?} has {} values, expected {}",
                values.len(),
                store.dim
            )));
        }
        store.vectors.insert(token.to_string(), values);
    }
    store.ok_or_else(|| Error::config(format!("{}: no embeddings found", path.display())))
}
