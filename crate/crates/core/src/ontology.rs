//! Rule-based first stage: a flat lexicalized sentiment ontology.
//!
//! Three kinds of sentiment concept exist and a surface form belongs to at
//! most one of them, so at most one rule fires per matched form:
//!
//! 1. `generic` concepts carry a fixed polarity;
//! 2. `aspect_specific` concepts fire only when their category matches the
//!    sentence's aspect category;
//! 3. `context_dependent` concepts look up their polarity by category.
//!
//! Matching is case-insensitive on unigrams and bigrams of the whole
//! sentence. Negation is not modelled.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Polarity, Sentence};
use crate::error::{Error, Result};

/// Polarity a sentiment concept can carry. Neutral is not representable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Negative,
}

impl From<Sentiment> for Polarity {
    fn from(s: Sentiment) -> Polarity {
        match s {
            Sentiment::Positive => Polarity::Positive,
            Sentiment::Negative => Polarity::Negative,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectEntry {
    pub form: String,
    pub category: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenericEntry {
    pub form: String,
    pub polarity: Sentiment,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectSpecificEntry {
    pub form: String,
    pub category: String,
    pub polarity: Sentiment,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDependentEntry {
    pub form: String,
    pub polarities: BTreeMap<String, Sentiment>,
}

/// On-disk layout of an ontology file.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyFile {
    #[serde(default)]
    pub aspects: Vec<AspectEntry>,
    #[serde(default)]
    pub generic: Vec<GenericEntry>,
    #[serde(default)]
    pub aspect_specific: Vec<AspectSpecificEntry>,
    #[serde(default)]
    pub context_dependent: Vec<ContextDependentEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Concept {
    Generic(Sentiment),
    AspectSpecific {
        category: String,
        polarity: Sentiment,
    },
    ContextDependent(BTreeMap<String, Sentiment>),
}

impl Concept {
    pub fn rule_id(&self) -> u8 {
        match self {
            Concept::Generic(_) => 1,
            Concept::AspectSpecific { .. } => 2,
            Concept::ContextDependent(_) => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub rule: u8,
    pub form: String,
    pub polarity: Sentiment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InconclusiveReason {
    Conflict,
    NoHit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "reason")]
pub enum Outcome {
    Positive,
    Negative,
    Inconclusive(InconclusiveReason),
}

impl Outcome {
    pub fn polarity(self) -> Option<Polarity> {
        match self {
            Outcome::Positive => Some(Polarity::Positive),
            Outcome::Negative => Some(Polarity::Negative),
            Outcome::Inconclusive(_) => None,
        }
    }

    pub fn is_conclusive(self) -> bool {
        !matches!(self, Outcome::Inconclusive(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyVerdict {
    pub outcome: Outcome,
    pub hits: Vec<Hit>,
}

/// `FOOD` matches `FOOD` and `FOOD#QUALITY`.
pub fn category_matches(concept_category: &str, sentence_category: &str) -> bool {
    let c = concept_category.to_ascii_uppercase();
    let s = sentence_category.to_ascii_uppercase();
    s == c || s.strip_prefix(c.as_str()).is_some_and(|rest| rest.starts_with('#'))
}

#[derive(Clone, Debug, Default)]
pub struct Ontology {
    aspects: HashMap<String, String>,
    concepts: HashMap<String, Concept>,
}

impl Ontology {
    pub fn from_file_contents(file: OntologyFile) -> Result<Self> {
        let mut onto = Ontology::default();
        for a in file.aspects {
            onto.aspects.insert(normalize(&a.form), a.category);
        }
        let mut insert = |form: &str, concept: Concept| -> Result<()> {
            let key = normalize(form);
            if key.is_empty() || key.split(' ').count() > 2 {
                return Err(Error::validation(
                    "ontology",
                    format!("surface form {form:?} must be one or two tokens"),
                ));
            }
            if onto.concepts.contains_key(&key) {
                return Err(Error::validation(
                    "ontology",
                    format!("surface form {form:?} listed more than once"),
                ));
            }
            onto.concepts.insert(key, concept);
            Ok(())
        };
        for g in file.generic {
            insert(&g.form, Concept::Generic(g.polarity))?;
        }
        for a in file.aspect_specific {
            insert(
                &a.form,
                Concept::AspectSpecific {
                    category: a.category,
                    polarity: a.polarity,
                },
            )?;
        }
        for c in file.context_dependent {
            if c.polarities.is_empty() {
                return Err(Error::validation(
                    "ontology",
                    format!("context-dependent form {:?} has no category polarities", c.form),
                ));
            }
            insert(&c.form, Concept::ContextDependent(c.polarities))?;
        }
        Ok(onto)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_contents(serde_json::from_str(text)?)
    }

    /// The miniature restaurant ontology shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_ONTOLOGY).expect("bundled ontology is valid")
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concept(&self, form: &str) -> Option<&Concept> {
        self.concepts.get(&normalize(form))
    }

    pub fn aspect_category(&self, form: &str) -> Option<&str> {
        self.aspects.get(&normalize(form)).map(String::as_str)
    }

    pub fn remove(&mut self, form: &str) -> Option<Concept> {
        self.concepts.remove(&normalize(form))
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.concepts.keys().map(String::as_str)
    }

    /// Hits in order of first occurrence in the sentence; each distinct form
    /// is reported once.
    pub fn find_hits(&self, s: &Sentence) -> Vec<Hit> {
        let lowered: Vec<String> = s.tokens.iter().map(|t| t.to_lowercase()).collect();
        let mut candidates: Vec<String> = Vec::with_capacity(2 * lowered.len());
        for (i, tok) in lowered.iter().enumerate() {
            candidates.push(tok.clone());
            if let Some(next) = lowered.get(i + 1) {
                candidates.push(format!("{tok} {next}"));
            }
        }
        let mut hits: Vec<Hit> = Vec::new();
        for form in candidates {
            if hits.iter().any(|h| h.form == form) {
                continue;
            }
            let Some(concept) = self.concepts.get(&form) else {
                continue;
            };
            let polarity = match concept {
                Concept::Generic(p) => Some(*p),
                Concept::AspectSpecific { category, polarity } => {
                    category_matches(category, &s.category).then_some(*polarity)
                }
                Concept::ContextDependent(map) => map
                    .iter()
                    .find(|(cat, _)| category_matches(cat, &s.category))
                    .map(|(_, p)| *p),
            };
            if let Some(polarity) = polarity {
                hits.push(Hit {
                    rule: concept.rule_id(),
                    form,
                    polarity,
                });
            }
        }
        hits
    }

    pub fn classify(&self, s: &Sentence) -> OntologyVerdict {
        let hits = self.find_hits(s);
        let outcome = match hits.first() {
            None => Outcome::Inconclusive(InconclusiveReason::NoHit),
            Some(first) if hits.iter().all(|h| h.polarity == first.polarity) => match first.polarity {
                Sentiment::Positive => Outcome::Positive,
                Sentiment::Negative => Outcome::Negative,
            },
            Some(_) => Outcome::Inconclusive(InconclusiveReason::Conflict),
        };
        OntologyVerdict { outcome, hits }
    }
}

fn normalize(form: &str) -> String {
    form.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn load_ontology(path: &Path) -> Result<Ontology> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ontology::from_json(&text)
}

pub const BUNDLED_ONTOLOGY: &str = include_str!("../fixtures/mini_ontology.json");

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(text: &str, category: &str) -> Sentence {
        let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
        Sentence::new("t", tokens, (0, 1), category, Polarity::Positive).unwrap()
    }

    #[test]
    fn generic_rule_fires() {
        let onto = Ontology::from_json(r#"{"generic":[{"form":"great","polarity":"positive"}]}"#).unwrap();
        assert_eq!(onto.len(), 1);
        let hits = onto.find_hits(&sentence("great pizza", "FOOD"));
        assert_eq!(
            hits,
            vec![Hit {
                rule: 1,
                form: "great".into(),
                polarity: Sentiment::Positive
            }]
        );
    }

    #[test]
    fn aspect_specific_category_gate() {
        let onto = Ontology::from_json(
            r#"{"aspect_specific":[{"form":"fast","category":"SERVICE","polarity":"positive"}]}"#,
        )
        .unwrap();
        assert!(onto.find_hits(&sentence("fast food", "FOOD")).is_empty());
        assert_eq!(onto.find_hits(&sentence("fast waiters", "SERVICE"))[0].rule, 2);
    }

    #[test]
    fn context_dependent_lookup() {
        let onto = Ontology::from_json(
            r#"{"context_dependent":[{"form":"cheap","polarities":{"PRICE":"positive","AMBIENCE":"negative"}}]}"#,
        )
        .unwrap();
        let hits = onto.find_hits(&sentence("cheap drinks", "PRICE"));
        assert_eq!(
            hits,
            vec![Hit {
                rule: 3,
                form: "cheap".into(),
                polarity: Sentiment::Positive
            }]
        );
        assert_eq!(onto.find_hits(&sentence("cheap decor", "AMBIENCE"))[0].polarity, Sentiment::Negative);
        assert!(onto.find_hits(&sentence("cheap staff", "SERVICE")).is_empty());
    }

    #[test]
    fn verdicts() {
        let onto = Ontology::from_json(
            r#"{"generic":[{"form":"great","polarity":"positive"},{"form":"tasty","polarity":"positive"},{"form":"rude","polarity":"negative"}]}"#,
        )
        .unwrap();
        let v = onto.classify(&sentence("the table by the window", "AMBIENCE"));
        assert_eq!(v.outcome, Outcome::Inconclusive(InconclusiveReason::NoHit));
        let v = onto.classify(&sentence("great food but rude staff", "FOOD"));
        assert_eq!(v.outcome, Outcome::Inconclusive(InconclusiveReason::Conflict));
        let v = onto.classify(&sentence("great and tasty", "FOOD"));
        assert_eq!(v.outcome, Outcome::Positive);
        assert_eq!(v.hits.len(), 2);
    }

    #[test]
    fn duplicate_form_across_kinds_is_rejected() {
        let err = Ontology::from_json(
            r#"{"generic":[{"form":"good","polarity":"positive"}],
                "aspect_specific":[{"form":"good","category":"FOOD","polarity":"positive"}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("good"), "{err}");
    }

    #[test]
    fn empty_context_map_is_rejected() {
        assert!(Ontology::from_json(r#"{"context_dependent":[{"form":"cold","polarities":{}}]}"#).is_err());
    }

    #[test]
    fn neutral_concepts_do_not_parse() {
        assert!(Ontology::from_json(r#"{"generic":[{"form":"ok","polarity":"neutral"}]}"#).is_err());
    }

    #[test]
    fn bigrams_and_case() {
        let onto = Ontology::from_json(r#"{"generic":[{"form":"Top Notch","polarity":"positive"}]}"#).unwrap();
        assert_eq!(onto.classify(&sentence("service was TOP notch", "SERVICE")).outcome, Outcome::Positive);
    }

    #[test]
    fn category_prefix_matching() {
        assert!(category_matches("FOOD", "FOOD"));
        assert!(category_matches("FOOD", "food#quality"));
        assert!(!category_matches("FOOD", "FOODS"));
        assert!(!category_matches("FOOD#QUALITY", "FOOD"));
    }

    #[test]
    fn bundled_ontology_loads() {
        let onto = Ontology::bundled();
        assert!(onto.len() >= 25, "{}", onto.len());
        assert_eq!(onto.aspect_category("pizza"), Some("FOOD"));
    }
}
