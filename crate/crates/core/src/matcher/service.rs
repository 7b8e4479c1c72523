//! Text-model service adapter.
//!
//! Wire protocol: HTTP POST of a JSON body
//! `{"model", "temperature", "top_k", "prompt_sections": {...}, "parts": [...], "intention"}`;
//! the reply is `{"category": "high|medium|low", "global": ..., "object": ...}`.
//! Each part is asked `vote_count` times and the answers are majority-voted.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::intent::SynonymLexicon;
use crate::scene::{Intention, MatchLevel};

use super::scripted::{holistic_score, scripted_match, PartKind};
use super::{vote, MatchError, MatchTriple};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub role: String,
    pub task: String,
    pub steps: String,
    pub examples: String,
    pub notes: String,
    pub output_format: String,
}

impl Default for PromptBundle {
    fn default() -> Self {
        Self {
            role: include_str!("../../data/prompts/role.txt").into(),
            task: include_str!("../../data/prompts/task.txt").into(),
            steps: include_str!("../../data/prompts/steps.txt").into(),
            examples: include_str!("../../data/prompts/examples.txt").into(),
            notes: include_str!("../../data/prompts/notes.txt").into(),
            output_format: include_str!("../../data/prompts/output_format.txt").into(),
        }
    }
}

impl PromptBundle {
    /// Loads `role.txt`, `task.txt`, ... from a directory.
    pub fn load_dir(dir: &std::path::Path) -> std::io::Result<Self> {
        let read = |name: &str| std::fs::read_to_string(dir.join(format!("{name}.txt")));
        Ok(Self {
            role: read("role")?,
            task: read("task")?,
            steps: read("steps")?,
            examples: read("examples")?,
            notes: read("notes")?,
            output_format: read("output_format")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub top_k: u32,
    pub vote_count: u32,
    pub timeout_secs: u64,
    /// Attempts per vote before the adapter gives up.
    pub retries: u32,
    #[serde(skip)]
    pub prompt_bundle: PromptBundle,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/match".into(),
            model_name: "gpt-3.5-turbo-16k".into(),
            temperature: 0.0,
            top_k: 1,
            vote_count: 3,
            timeout_secs: 30,
            retries: 3,
            prompt_bundle: PromptBundle::default(),
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if self.vote_count == 0 || self.vote_count % 2 == 0 {
            return Err(MatchError::BadVoteCount(self.vote_count));
        }
        Ok(())
    }
}

pub trait Transport: Send + Sync {
    fn post(&self, body: &Value) -> Result<String, MatchError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
}

impl HttpTransport {
    pub fn new(config: &ServiceConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_secs)).build();
        Self { agent, endpoint: config.endpoint.clone() }
    }
}

impl Transport for HttpTransport {
    fn post(&self, body: &Value) -> Result<String, MatchError> {
        self.agent
            .post(&self.endpoint)
            .send_json(body.clone())
            .map_err(|e| MatchError::Transport(e.to_string()))?
            .into_string()
            .map_err(|e| MatchError::Transport(e.to_string()))
    }
}

/// In-process responder speaking the same wire protocol, answering with the
/// scripted matcher. Lets the service path run without a network.
pub struct ScriptedTransport {
    pub lexicon: SynonymLexicon,
}

impl Transport for ScriptedTransport {
    fn post(&self, body: &Value) -> Result<String, MatchError> {
        let intention: Intention = serde_json::from_value(body["intention_detail"].clone())
            .unwrap_or_else(|_| Intention { text: body["intention"].as_str().unwrap_or_default().into(), targets: vec![] });
        let part = |kind: &str| {
            body["parts"]
                .as_array()
                .and_then(|ps| ps.iter().find(|p| p["kind"] == kind))
                .and_then(|p| p["text"].as_str())
                .unwrap_or_default()
                .to_string()
        };
        if body.get("mode").and_then(Value::as_str) == Some("direct_score") {
            let score = holistic_score(&part("category"), &part("object"), &part("global"), &intention);
            return Ok(json!({ "score": score }).to_string());
        }
        let grade = |text: String, kind| scripted_match(&text, kind, &intention, &self.lexicon).as_word();
        Ok(json!({
            "category": grade(part("category"), PartKind::Category),
            "global": grade(part("global"), PartKind::Caption),
            "object": grade(part("object"), PartKind::Caption),
        })
        .to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartTexts {
    pub category: String,
    pub global_caption: String,
    pub object_caption: String,
}

fn request_body(parts: &PartTexts, intention: &Intention, config: &ServiceConfig) -> Value {
    let p = &config.prompt_bundle;
    json!({
        "model": config.model_name,
        "temperature": config.temperature,
        "top_k": config.top_k,
        "prompt_sections": {
            "role": p.role,
            "task": p.task,
            "steps": p.steps,
            "examples": p.examples,
            "notes": p.notes,
            "output_format": p.output_format,
        },
        "parts": [
            { "kind": "category", "text": parts.category },
            { "kind": "global", "text": parts.global_caption },
            { "kind": "object", "text": parts.object_caption },
        ],
        "intention": intention.text,
        "intention_detail": intention,
    })
}

fn parse_reply(reply: &str) -> Result<MatchTriple, MatchError> {
    let v: Value = serde_json::from_str(reply.trim()).map_err(|e| MatchError::Malformed(e.to_string()))?;
    let field = |name: &str| {
        v.get(name)
            .and_then(Value::as_str)
            .and_then(MatchLevel::from_word)
            .ok_or_else(|| MatchError::Malformed(format!("missing or invalid {name:?} in {reply:?}")))
    };
    Ok(MatchTriple::new(field("category")?, field("global")?, field("object")?))
}

fn with_retries<T>(
    config: &ServiceConfig,
    mut attempt: impl FnMut() -> Result<T, MatchError>,
) -> Result<T, MatchError> {
    let mut last = String::new();
    for _ in 0..config.retries.max(1) {
        match attempt() {
            Ok(v) => return Ok(v),
            Err(e) => last = e.to_string(),
        }
    }
    Err(MatchError::Exhausted { attempts: config.retries.max(1), last })
}

pub fn service_match(
    parts: &PartTexts,
    intention: &Intention,
    config: &ServiceConfig,
    transport: &dyn Transport,
) -> Result<MatchTriple, MatchError> {
    config.validate()?;
    let body = request_body(parts, intention, config);
    let mut ballots = Vec::with_capacity(config.vote_count as usize);
    for _ in 0..config.vote_count {
        ballots.push(with_retries(config, || parse_reply(&transport.post(&body)?))?);
    }
    let column = |f: fn(&MatchTriple) -> MatchLevel| ballots.iter().map(f).collect::<Vec<_>>();
    Ok(MatchTriple::new(
        vote(&column(|t| t.category_match))?,
        vote(&column(|t| t.global_match))?,
        vote(&column(|t| t.object_match))?,
    ))
}

/// Asks the service for a single 0–8 relevance score (no decomposition, no voting).
/// Reply format: `{"score": n}`.
pub fn service_direct_score(
    parts: &PartTexts,
    intention: &Intention,
    config: &ServiceConfig,
    transport: &dyn Transport,
) -> Result<u8, MatchError> {
    let mut body = request_body(parts, intention, config);
    body["mode"] = json!("direct_score");
    with_retries(config, || {
        let reply = transport.post(&body)?;
        let v: Value = serde_json::from_str(reply.trim()).map_err(|e| MatchError::Malformed(e.to_string()))?;
        v.get("score")
            .and_then(Value::as_u64)
            .filter(|s| *s <= 8)
            .map(|s| s as u8)
            .ok_or_else(|| MatchError::Malformed(format!("bad score in {reply:?}")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Canned {
        replies: Mutex<Vec<String>>,
    }

    impl Transport for Canned {
        fn post(&self, _body: &Value) -> Result<String, MatchError> {
            let mut r = self.replies.lock().unwrap();
            if r.len() > 1 {
                Ok(r.remove(0))
            } else {
                Ok(r[0].clone())
            }
        }
    }

    fn canned(replies: &[&str]) -> Canned {
        Canned { replies: Mutex::new(replies.iter().map(|s| s.to_string()).collect()) }
    }

    fn parts() -> PartTexts {
        PartTexts { category: "dog".into(), global_caption: "a dog".into(), object_caption: "a dog".into() }
    }

    fn intention() -> Intention {
        Intention { text: "send the dog".into(), targets: vec![] }
    }

    #[test]
    fn echo_stub_all_high() {
        let t = canned(&[r#"{"category":"high","global":"high","object":"high"}"#]);
        let got = service_match(&parts(), &intention(), &ServiceConfig::default(), &t).unwrap();
        assert_eq!(got, MatchTriple::new(MatchLevel::High, MatchLevel::High, MatchLevel::High));
    }

    #[test]
    fn per_part_majority() {
        let t = canned(&[
            r#"{"category":"high","global":"low","object":"medium"}"#,
            r#"{"category":"high","global":"low","object":"low"}"#,
            r#"{"category":"low","global":"high","object":"medium"}"#,
        ]);
        let got = service_match(&parts(), &intention(), &ServiceConfig::default(), &t).unwrap();
        assert_eq!(got, MatchTriple::new(MatchLevel::High, MatchLevel::Low, MatchLevel::Medium));
    }

    #[test]
    fn malformed_three_times_is_an_error() {
        let t = canned(&["not json"]);
        let err = service_match(&parts(), &intention(), &ServiceConfig::default(), &t).unwrap_err();
        assert!(matches!(err, MatchError::Exhausted { attempts: 3, .. }));
    }

    #[test]
    fn even_vote_count_rejected() {
        let cfg = ServiceConfig { vote_count: 2, ..ServiceConfig::default() };
        let t = canned(&["{}"]);
        assert!(matches!(service_match(&parts(), &intention(), &cfg, &t), Err(MatchError::BadVoteCount(2))));
    }

    #[test]
    fn scripted_transport_agrees_with_scripted_match() {
        let lex = SynonymLexicon::bundled();
        let t = ScriptedTransport { lexicon: lex.clone() };
        let i = Intention { text: "Please transmit clearly: puppy.".into(), targets: vec![] };
        let got = service_match(&parts(), &i, &ServiceConfig::default(), &t).unwrap();
        assert_eq!(got.category_match, MatchLevel::Medium);
        assert_eq!(got.object_match, scripted_match("a dog", PartKind::Caption, &i, &lex));
    }

    #[test]
    fn default_config_is_deterministic_sampling() {
        let c = ServiceConfig::default();
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.top_k, 1);
        assert!(c.validate().is_ok());
    }
}
