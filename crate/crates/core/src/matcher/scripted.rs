//! Deterministic lexical matcher.
//!
//! Category parts match on contiguous token runs in the intention text
//! (verbatim → high, lexicon synonym → medium). Caption parts are graded by
//! how many of the intention's expressed targets they mention.

use serde::{Deserialize, Serialize};

use crate::intent::{observed_level, SynonymLexicon};
use crate::scene::{Intention, MatchLevel, ObjectAnnotation, SceneDescription};
use crate::text::{phrase_in, tokenize};

use super::MatchTriple;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartKind {
    Category,
    Caption,
}

/// Target terms a reader of the intention text can actually see. Intentions
/// without a target list fall back to every lexicon term the text mentions.
pub fn expressed_terms(intention: &Intention, lexicon: &SynonymLexicon) -> Vec<String> {
    let tokens = tokenize(&intention.text);
    let visible = |term: &str| observed_level(&tokens, term, lexicon) > MatchLevel::Low;
    if intention.targets.is_empty() {
        lexicon.terms().filter(|t| visible(t)).map(str::to_string).collect()
    } else {
        intention.targets.iter().map(|t| t.term.clone()).filter(|t| visible(t)).collect()
    }
}

fn mentions(caption_tokens: &[String], term: &str, lexicon: &SynonymLexicon) -> bool {
    phrase_in(caption_tokens, term)
        || lexicon.synonyms(term).is_some_and(|syns| syns.iter().any(|s| phrase_in(caption_tokens, s)))
}

pub fn scripted_match(part_text: &str, kind: PartKind, intention: &Intention, lexicon: &SynonymLexicon) -> MatchLevel {
    match kind {
        PartKind::Category => observed_level(&tokenize(&intention.text), part_text, lexicon),
        PartKind::Caption => {
            let wanted = expressed_terms(intention, lexicon);
            let caption = tokenize(part_text);
            let hits = wanted.iter().filter(|t| mentions(&caption, t, lexicon)).count();
            if hits == 0 {
                MatchLevel::Low
            } else if hits == wanted.len() {
                MatchLevel::High
            } else {
                MatchLevel::Medium
            }
        }
    }
}

pub fn scripted_triple(
    scene: &SceneDescription,
    object: &ObjectAnnotation,
    intention: &Intention,
    lexicon: &SynonymLexicon,
) -> MatchTriple {
    MatchTriple::new(
        scripted_match(&object.category, PartKind::Category, intention, lexicon),
        scripted_match(&scene.global_caption, PartKind::Caption, intention, lexicon),
        scripted_match(&object.caption, PartKind::Caption, intention, lexicon),
    )
}

/// One-shot 0–8 score of a whole object description against the intention,
/// standing in for a model asked to score directly without the three-part
/// decomposition: the fraction of intention tokens found anywhere in the
/// concatenated category, object caption and image caption, scaled to 8.
pub fn holistic_score(category: &str, object_caption: &str, global_caption: &str, intention: &Intention) -> u8 {
    let wanted: std::collections::BTreeSet<String> = tokenize(&intention.text).into_iter().collect();
    if wanted.is_empty() {
        return 0;
    }
    let described: std::collections::BTreeSet<String> =
        tokenize(&format!("{category} {object_caption} {global_caption}")).into_iter().collect();
    let hits = wanted.intersection(&described).count();
    ((8 * hits + wanted.len() / 2) / wanted.len()) as u8
}
