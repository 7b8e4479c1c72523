//! Match grading between scene text parts and an intention.
//!
//! Two routes produce a [`MatchTriple`] per object: the deterministic
//! [`scripted`] matcher and the [`service`] adapter, which sends the prompt
//! bundle to a text-model endpoint and majority-votes the replies.

pub mod scripted;
pub mod service;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::MatchLevel;

pub use scripted::{holistic_score, scripted_match, scripted_triple, PartKind};
pub use service::{
    service_direct_score, service_match, HttpTransport, PartTexts, PromptBundle, ScriptedTransport, ServiceConfig,
    Transport,
};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("cannot vote on an empty list")]
    EmptyVote,
    #[error("vote_count must be odd and positive, got {0}")]
    BadVoteCount(u32),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed service reply: {0}")]
    Malformed(String),
    #[error("service adapter gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchTriple {
    pub category_match: MatchLevel,
    pub global_match: MatchLevel,
    pub object_match: MatchLevel,
}

impl MatchTriple {
    pub fn new(category: MatchLevel, global: MatchLevel, object: MatchLevel) -> Self {
        Self { category_match: category, global_match: global, object_match: object }
    }
}

/// Plurality vote; ties go to the lowest tied level.
pub fn vote(levels: &[MatchLevel]) -> Result<MatchLevel, MatchError> {
    if levels.is_empty() {
        return Err(MatchError::EmptyVote);
    }
    let count = |l: MatchLevel| levels.iter().filter(|&&x| x == l).count();
    let best = MatchLevel::ALL.iter().map(|&l| count(l)).max().unwrap_or(0);
    // ALL is ordered low → high, so the first level reaching `best` is the lowest tied winner.
    Ok(MatchLevel::ALL.into_iter().find(|&l| count(l) == best).expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use MatchLevel::*;

    #[test]
    fn vote_examples() {
        assert_eq!(vote(&[High, High, Low]).unwrap(), High);
        assert_eq!(vote(&[High, Low]).unwrap(), Low);
        assert_eq!(vote(&[Medium]).unwrap(), Medium);
        assert_eq!(vote(&[High, Medium, Low]).unwrap(), Low);
        assert!(matches!(vote(&[]), Err(MatchError::EmptyVote)));
    }

    #[test]
    fn vote_is_idempotent_on_unanimous_input() {
        for l in MatchLevel::ALL {
            for n in 1..6 {
                assert_eq!(vote(&vec![l; n]).unwrap(), l);
            }
        }
    }
}
