//! Pre-tokenized review corpus: parsing, target splitting and polarity
//! statistics.
//!
//! Corpus files are JSON lines, one target per line:
//!
//! ```text
//! {"sid": "1004293:0", "tokens": ["the", "pizza", "was", "great"], "target": [1, 2],
//!  "category": "FOOD#QUALITY", "polarity": "positive"}
//! ```
//!
//! `target` is a half-open, 0-based token range. A sentence with several
//! targets appears as several lines sharing `sid`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    pub fn index(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Neutral => 1,
            Polarity::Positive => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Polarity::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Contract(format!("class index {i} out of range 0..3")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
            Polarity::Positive => "positive",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            "positive" => Ok(Polarity::Positive),
            other => Err(Error::validation(
                "polarity",
                format!("unknown polarity {other:?}, expected negative|neutral|positive"),
            )),
        }
    }
}

pub fn label_to_index(p: Polarity) -> usize {
    p.index()
}

pub fn index_to_label(i: usize) -> Result<Polarity> {
    Polarity::from_index(i)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub sid: String,
    pub tokens: Vec<String>,
    /// Half-open token range `[start, end)`.
    pub target: (usize, usize),
    pub category: String,
    pub polarity: Polarity,
}

impl Sentence {
    pub fn new(
        sid: impl Into<String>,
        tokens: Vec<String>,
        target: (usize, usize),
        category: impl Into<String>,
        polarity: Polarity,
    ) -> Result<Self> {
        let s = Sentence {
            sid: sid.into(),
            tokens,
            target,
            category: category.into(),
            polarity,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (start, end) = self.target;
        if start >= end || end > self.tokens.len() {
            return Err(Error::validation(
                format!("sid {}", self.sid),
                format!(
                    "target span [{start},{end}) invalid for {} tokens",
                    self.tokens.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn split(&self) -> SplitSentence {
        split_around_target(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSentence {
    pub left: Vec<String>,
    pub target: Vec<String>,
    pub right: Vec<String>,
}

impl SplitSentence {
    pub fn tokens(&self) -> Vec<String> {
        let mut all = self.left.clone();
        all.extend(self.target.iter().cloned());
        all.extend(self.right.iter().cloned());
        all
    }
}

pub fn split_around_target(s: &Sentence) -> SplitSentence {
    let (start, end) = s.target;
    SplitSentence {
        left: s.tokens[..start].to_vec(),
        target: s.tokens[start..end].to_vec(),
        right: s.tokens[end..].to_vec(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
    Unspecified,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub split: SplitTag,
    pub source: String,
}

/// Raw line shape; `polarity` is a string so unknown labels surface as
/// validation errors with the offending sid.
#[derive(Deserialize)]
struct RawLine {
    sid: String,
    tokens: Vec<String>,
    target: (usize, usize),
    category: String,
    polarity: String,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>, split: SplitTag, source: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &sentences {
            s.validate()?;
            if !seen.insert((s.sid.as_str(), s.target)) {
                return Err(Error::validation(
                    format!("sid {}", s.sid),
                    format!("duplicate target span [{},{})", s.target.0, s.target.1),
                ));
            }
        }
        Ok(Corpus {
            sentences,
            split,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sentence> {
        self.sentences.iter()
    }

    /// Most frequent gold label; ties resolve to the lowest class index.
    pub fn majority_label(&self) -> Result<Polarity> {
        let dist = class_distribution(self)?;
        let mut best = Polarity::Negative;
        for p in Polarity::ALL {
            if dist.counts[p.index()] > dist.counts[best.index()] {
                best = p;
            }
        }
        Ok(best)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        for s in &self.sentences {
            serde_json::to_writer(&mut f, s)?;
            writeln!(f).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Parses a JSON-lines corpus. Blank lines are skipped; every malformed
/// line fails the whole parse with its line number.
pub fn parse_corpus(path: &Path, split: SplitTag) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let located = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let raw: RawLine = serde_json::from_str(&line).map_err(|e| located(e.to_string()))?;
        let polarity: Polarity = raw
            .polarity
            .parse()
            .map_err(|e: Error| located(format!("sid {}: {e}", raw.sid)))?;
        let s = Sentence {
            sid: raw.sid,
            tokens: raw.tokens,
            target: raw.target,
            category: raw.category,
            polarity,
        };
        s.validate().map_err(|e| located(e.to_string()))?;
        if !seen.insert((s.sid.clone(), s.target)) {
            return Err(located(format!(
                "sid {}: duplicate target span [{},{})",
                s.sid, s.target.0, s.target.1
            )));
        }
        sentences.push(s);
    }
    Ok(Corpus {
        sentences,
        split,
        source: path.display().to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassDistribution {
    /// Indexed by class: negative, neutral, positive.
    pub counts: [usize; 3],
    /// Percentages rounded to one decimal place.
    pub percentages: [f64; 3],
    pub total: usize,
}

impl ClassDistribution {
    pub fn percent(&self, p: Polarity) -> f64 {
        self.percentages[p.index()]
    }

    pub fn count(&self, p: Polarity) -> usize {
        self.counts[p.index()]
    }
}

pub fn class_distribution(c: &Corpus) -> Result<ClassDistribution> {
    if c.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts = [0usize; 3];
    for s in c.iter() {
        counts[s.polarity.index()] += 1;
    }
    let total = c.len();
    let percentages = counts.map(|n| (1000.0 * n as f64 / total as f64).round() / 10.0);
    Ok(ClassDistribution {
        counts,
        percentages,
        total,
    })
}
