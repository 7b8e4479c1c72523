//! Intention generation with controlled ground-truth match levels.
//!
//! Each label independently keeps its name (level 3), is swapped for a
//! lexicon synonym (level 2) or is dropped from the text (level 1), with
//! probability 1/3 each. Draws come from [`crate::rng::seeded`], so a
//! fixed `(labels, lexicon, seed, template)` tuple always produces the same
//! intention.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, uniform_index};
use crate::scene::{Intention, MatchLevel, Target};
use crate::text::{phrase_in, tokenize};

pub const LABELS_PLACEHOLDER: &str = "{labels}";
pub const DEFAULT_TEMPLATE: &str = "Please transmit clearly: {labels}.";
pub const LEXICON_VERSION: &str = "coco80-v1";

/// The synonym lexicon shipped with the crate, covering the COCO category names.
pub const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.json");

#[derive(Debug, Error)]
pub enum IntentError {
    #[error("term {0:?} is not in the lexicon")]
    AbsentTerm(String),
    #[error("lexicon entry {0:?} has no synonyms")]
    EmptyEntry(String),
    #[error("lexicon entry {0:?} lists itself as a synonym")]
    SelfSynonym(String),
    #[error("template {0:?} has no {{labels}} placeholder")]
    MissingPlaceholder(String),
    #[error("lexicon io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn new(raw: BTreeMap<String, Vec<String>>) -> Result<Self, IntentError> {
        let mut entries = BTreeMap::new();
        for (term, syns) in raw {
            let key = term.trim().to_lowercase();
            let syns: Vec<String> = syns.iter().map(|s| s.trim().to_lowercase()).collect();
            if syns.is_empty() {
                return Err(IntentError::EmptyEntry(key));
            }
            if syns.contains(&key) {
                return Err(IntentError::SelfSynonym(key));
            }
            entries.insert(key, syns);
        }
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, IntentError> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IntentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| IntentError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn synonyms(&self, term: &str) -> Option<&[String]> {
        self.entries.get(&term.trim().to_lowercase()).map(Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Uniform draw from the term's synonym list.
pub fn lookup_synonym<R: RngCore>(term: &str, lexicon: &SynonymLexicon, rng: &mut R) -> Result<String, IntentError> {
    let syns = lexicon.synonyms(term).ok_or_else(|| IntentError::AbsentTerm(term.to_string()))?;
    Ok(syns[uniform_index(rng, syns.len())].clone())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedIntention {
    pub intention: Intention,
    pub template: String,
    pub warnings: Vec<String>,
}

/// What a reader of `text` can observe about `term`: verbatim, via a synonym, or not at all.
pub fn observed_level(text_tokens: &[String], term: &str, lexicon: &SynonymLexicon) -> MatchLevel {
    if phrase_in(text_tokens, term) {
        MatchLevel::High
    } else if lexicon.synonyms(term).is_some_and(|s| s.iter().any(|syn| phrase_in(text_tokens, syn))) {
        MatchLevel::Medium
    } else {
        MatchLevel::Low
    }
}

pub fn generate_intention(
    labels: &[String],
    lexicon: &SynonymLexicon,
    seed: u64,
    template: &str,
) -> Result<GeneratedIntention, IntentError> {
    if !template.contains(LABELS_PLACEHOLDER) {
        return Err(IntentError::MissingPlaceholder(template.to_string()));
    }
    let mut rng = rng::seeded(seed);
    let mut warnings = Vec::new();
    let mut targets = Vec::with_capacity(labels.len());
    let mut spoken = Vec::new();

    for label in labels {
        let level = match uniform_index(&mut rng, 3) {
            0 => {
                spoken.push(label.clone());
                MatchLevel::High
            }
            1 => match lookup_synonym(label, lexicon, &mut rng) {
                Ok(syn) => {
                    spoken.push(syn);
                    MatchLevel::Medium
                }
                Err(_) => {
                    warnings.push(format!("{label:?}: no synonym in lexicon, kept unchanged (level 3)"));
                    spoken.push(label.clone());
                    MatchLevel::High
                }
            },
            _ => MatchLevel::Low,
        };
        targets.push(Target { term: label.clone(), level });
    }

    let text = template.replace(LABELS_PLACEHOLDER, &spoken.join(", "));

    // Nested names ("hot dog" / "dog") can make a dropped term readable anyway;
    // ground truth follows what the text actually shows.
    let tokens = tokenize(&text);
    for t in &mut targets {
        let seen = observed_level(&tokens, &t.term, lexicon);
        if seen != t.level {
            warnings.push(format!("{:?}: drawn level {} but text shows level {}, adjusted", t.term, t.level as u8, seen as u8));
            t.level = seen;
        }
    }

    Ok(GeneratedIntention { intention: Intention { text, targets }, template: template.to_string(), warnings })
}
