//! Model backends: prompt rendering, response parsing, the OpenAI-style chat
//! client, the embedding client and a rule-driven scripted backend.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::ImagePayload;

pub mod http;
pub mod parse;
pub mod prompt;
pub mod scripted;

pub use http::{HttpEmbeddingClient, OpenAiChatClient};
pub use parse::{parse_answer_letter, parse_confidence, parse_glance_decision, GlanceDecision};
pub use prompt::{render_prompt, PromptContext};
pub use scripted::ScriptedProvider;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    GlanceDecision,
    KeyInfoInitial,
    KeyInfoUpdate,
    Answer,
    Reason,
    Confidence,
}

impl PromptKind {
    pub const ALL: [PromptKind; 6] = [
        PromptKind::GlanceDecision,
        PromptKind::KeyInfoInitial,
        PromptKind::KeyInfoUpdate,
        PromptKind::Answer,
        PromptKind::Reason,
        PromptKind::Confidence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::GlanceDecision => "glance_decision",
            PromptKind::KeyInfoInitial => "key_info_initial",
            PromptKind::KeyInfoUpdate => "key_info_update",
            PromptKind::Answer => "answer",
            PromptKind::Reason => "reason",
            PromptKind::Confidence => "confidence",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One multimodal completion request.
///
/// `kind`, `round` and `attempt` describe where in the dialogue the request
/// sits; they are not sent over the wire but let scripted backends and the
/// trace identify the exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub kind: PromptKind,
    /// 0 for the glance, otherwise the 1-based round.
    pub round: u32,
    /// 0 for the first ask, 1 for a re-ask after an unparseable reply.
    pub attempt: u32,
    pub prompt_text: String,
    /// Frame indices shown with this prompt, ascending.
    pub frames: Vec<usize>,
    #[serde(skip)]
    pub images: Vec<ImagePayload>,
    pub temperature: f32,
    pub max_tokens: u32,
}

pub trait ChatProvider: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<String>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for &T {
    fn chat(&self, req: &ChatRequest) -> Result<String> {
        (**self).chat(req)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        (**self).embed_texts(texts)
    }
}

/// Embeds one text and returns it L2-normalised, checking its dimension.
pub fn embed_text(provider: &dyn EmbeddingProvider, text: &str, expected_dim: usize) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot embed empty text"));
    }
    let mut out = provider.embed_texts(&[text.to_string()])?;
    if out.len() != 1 {
        return Err(Error::invalid(format!(
            "embedding backend returned {} vectors for one text",
            out.len()
        )));
    }
    let v = out.pop().expect("one vector");
    if v.len() != expected_dim {
        return Err(Error::DimMismatch {
            expected: expected_dim,
            got: v.len(),
        });
    }
    let v: Vec<f64> = v.into_iter().map(f64::from).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::invalid("embedding backend returned a zero or non-finite vector"));
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
}

/// Connection settings for an HTTP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    /// Seconds.
    pub timeout: f64,
    pub retries: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000".into(),
            model: String::new(),
            api_key_env: None,
            timeout: 120.0,
            retries: 2,
        }
    }
}

impl ProviderConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout.max(0.001))
    }

    pub fn api_key(&self) -> Option<String> {
        self.api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty())
    }
}
