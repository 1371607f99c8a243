//! A deterministic backend driven by a rule file, used for offline runs and
//! tests.
//!
//! ```json
//! {
//!   "rules": [
//!     {"kind": "glance_decision", "response": "No"},
//!     {"kind": "answer", "round": 1, "contains": "red car", "response": "B"},
//!     {"kind": "confidence", "attempt": 0, "error": "timeout"}
//!   ],
//!   "embeddings": [{"contains": "red car", "vector": [1.0, 0.0]}],
//!   "default_embedding": [0.0, 1.0]
//! }
//! ```
//!
//! A chat request is answered by the first rule whose every present field
//! matches; unmatched requests fail. See `schemas/scripted_rules.schema.json`.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ChatProvider, ChatRequest, EmbeddingProvider, PromptKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulatedError {
    Transport,
    Timeout,
    Auth,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PromptKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    /// Substring the rendered prompt must contain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<SimulatedError>,
}

impl ChatRule {
    pub fn reply(kind: PromptKind, response: impl Into<String>) -> Self {
        Self {
            kind: Some(kind),
            round: None,
            attempt: None,
            contains: None,
            response: Some(response.into()),
            error: None,
        }
    }

    pub fn in_round(mut self, round: u32) -> Self {
        self.round = Some(round);
        self
    }

    pub fn containing(mut self, needle: impl Into<String>) -> Self {
        self.contains = Some(needle.into());
        self
    }

    fn matches(&self, req: &ChatRequest) -> bool {
        self.kind.is_none_or(|k| k == req.kind)
            && self.round.is_none_or(|r| r == req.round)
            && self.attempt.is_none_or(|a| a == req.attempt)
            && self
                .contains
                .as_deref()
                .is_none_or(|needle| req.prompt_text.contains(needle))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRule {
    /// Exact text to match.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Substring to match.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub vector: Vec<f32>,
}

impl EmbeddingRule {
    fn matches(&self, text: &str) -> bool {
        self.text.as_deref().is_none_or(|t| t == text)
            && self.contains.as_deref().is_none_or(|c| text.contains(c))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRules {
    #[serde(default)]
    pub rules: Vec<ChatRule>,
    #[serde(default)]
    pub embeddings: Vec<EmbeddingRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_embedding: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub kind: PromptKind,
    pub round: u32,
    pub attempt: u32,
}

#[derive(Debug, Default)]
pub struct ScriptedProvider {
    rules: ScriptedRules,
    calls: Mutex<Vec<CallRecord>>,
}

impl ScriptedProvider {
    pub fn new(rules: ScriptedRules) -> Self {
        Self {
            rules,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn rules(&self) -> &ScriptedRules {
        &self.rules
    }

    /// Every chat request seen so far, in arrival order.
    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("call log poisoned").len()
    }
}

impl ChatProvider for ScriptedProvider {
    fn chat(&self, req: &ChatRequest) -> Result<String> {
        self.calls.lock().expect("call log poisoned").push(CallRecord {
            kind: req.kind,
            round: req.round,
            attempt: req.attempt,
        });
        let request_id = format!("scripted-{}-r{}-a{}", req.kind, req.round, req.attempt);
        let rule = self
            .rules
            .rules
            .iter()
            .find(|r| r.matches(req))
            .ok_or_else(|| Error::NoScriptedRule(format!("{} in round {}", req.kind, req.round)))?;
        match (rule.error, &rule.response) {
            (Some(SimulatedError::Transport), _) => Err(Error::Transport {
                request_id,
                message: "simulated transport failure".into(),
            }),
            (Some(SimulatedError::Timeout), _) => Err(Error::Timeout { request_id }),
            (Some(SimulatedError::Auth), _) => Err(Error::Auth {
                request_id,
                message: "simulated auth failure".into(),
            }),
            (None, Some(text)) => Ok(text.clone()),
            (None, None) => Err(Error::NoScriptedRule(format!(
                "{} in round {} (rule has neither response nor error)",
                req.kind, req.round
            ))),
        }
    }
}

impl EmbeddingProvider for ScriptedProvider {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        texts
            .iter()
            .map(|text| {
                self.rules
                    .embeddings
                    .iter()
                    .find(|r| r.matches(text))
                    .map(|r| r.vector.clone())
                    .or_else(|| self.rules.default_embedding.clone())
                    .ok_or_else(|| Error::NoScriptedRule(format!("embedding of {text:?}")))
            })
            .collect()
    }
}
