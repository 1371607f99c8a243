//! HTTP backends: an OpenAI-compatible chat-completions client with image
//! parts as base64 data URLs, and a `/embed_text` embedding client.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::prompt::FRAME_TOKENS;
use super::{ChatProvider, ChatRequest, EmbeddingProvider, ProviderConfig};

const MAX_BACKOFF: Duration = Duration::from_secs(8);

/// Runs `op`, retrying transient failures up to `retries` times with
/// exponential backoff starting at `base`.
pub fn with_retries<T>(retries: u32, base: Duration, mut op: impl FnMut(u32) -> Result<T>) -> Result<T> {
    let mut attempt = 0;
    loop {
        match op(attempt) {
            Err(e) if e.is_transient() && attempt < retries => {
                let wait = base.saturating_mul(1 << attempt.min(16)).min(MAX_BACKOFF);
                thread::sleep(wait);
                attempt += 1;
            }
            other => return other,
        }
    }
}

static REQUEST_SEQ: AtomicU64 = AtomicU64::new(0);

fn next_request_id(prefix: &str) -> String {
    format!("{prefix}-{}-{}", std::process::id(), REQUEST_SEQ.fetch_add(1, Ordering::Relaxed))
}

fn agent_for(cfg: &ProviderConfig) -> ureq::Agent {
    ureq::Agent::new_with_config(
        ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout()))
            .http_status_as_error(false)
            .build(),
    )
}

fn endpoint(base: &str, path: &str) -> String {
    format!("{}{path}", base.trim_end_matches('/'))
}

fn post_json(
    agent: &ureq::Agent,
    cfg: &ProviderConfig,
    url: &str,
    request_id: &str,
    body: &Value,
) -> Result<Value> {
    let mut builder = agent.post(url).header("X-Request-Id", request_id);
    if let Some(key) = cfg.api_key() {
        builder = builder.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = builder.send_json(body).map_err(|e| match e {
        ureq::Error::Timeout(_) => Error::Timeout {
            request_id: request_id.to_string(),
        },
        other => Error::Transport {
            request_id: request_id.to_string(),
            message: other.to_string(),
        },
    })?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(|e| Error::Transport {
        request_id: request_id.to_string(),
        message: format!("reading response body: {e}"),
    })?;
    match status {
        200..=299 => serde_json::from_str(&text).map_err(|e| Error::Transport {
            request_id: request_id.to_string(),
            message: format!("malformed JSON response: {e}"),
        }),
        401 | 403 => Err(Error::Auth {
            request_id: request_id.to_string(),
            message: text,
        }),
        408 | 429 | 500..=599 => Err(Error::Transport {
            request_id: request_id.to_string(),
            message: format!("HTTP {status}: {text}"),
        }),
        _ => Err(Error::HttpStatus {
            request_id: request_id.to_string(),
            status,
            message: text,
        }),
    }
}

/// Chat client for `POST {base_url}/v1/chat/completions`.
pub struct OpenAiChatClient {
    cfg: ProviderConfig,
    agent: ureq::Agent,
    backoff: Duration,
}

impl OpenAiChatClient {
    pub fn new(cfg: ProviderConfig) -> Self {
        let agent = agent_for(&cfg);
        Self {
            cfg,
            agent,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn url(&self) -> String {
        let base = self.cfg.base_url.trim_end_matches('/');
        if base.ends_with("/v1") {
            endpoint(base, "/chat/completions")
        } else {
            endpoint(base, "/v1/chat/completions")
        }
    }

    /// The JSON body sent for `req`. Images replace the frame-token marker,
    /// in ascending frame order.
    pub fn request_body(&self, req: &ChatRequest) -> Value {
        let mut images = req.images.clone();
        images.sort_by_key(|i| i.index);
        let image_parts = images
            .iter()
            .map(|img| json!({"type": "image_url", "image_url": {"url": img.data_url()}}));

        let mut content = Vec::new();
        match req.prompt_text.split_once(FRAME_TOKENS) {
            Some((before, after)) => {
                content.push(json!({"type": "text", "text": before}));
                content.extend(image_parts);
                content.push(json!({"type": "text", "text": after}));
            }
            None => {
                content.extend(image_parts);
                content.push(json!({"type": "text", "text": req.prompt_text}));
            }
        }
        json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "stream": false,
        })
    }
}

fn completion_text(v: &Value, request_id: &str) -> Result<String> {
    let content = &v["choices"][0]["message"]["content"];
    if let Some(s) = content.as_str() {
        return Ok(s.to_string());
    }
    if let Some(parts) = content.as_array() {
        let text: String = parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("");
        return Ok(text);
    }
    Err(Error::Transport {
        request_id: request_id.to_string(),
        message: "response has no choices[0].message.content".into(),
    })
}

impl ChatProvider for OpenAiChatClient {
    fn chat(&self, req: &ChatRequest) -> Result<String> {
        let body = self.request_body(req);
        let url = self.url();
        with_retries(self.cfg.retries, self.backoff, |_| {
            let id = next_request_id("chat");
            let v = post_json(&self.agent, &self.cfg, &url, &id, &body)?;
            completion_text(&v, &id)
        })
    }
}

/// Embedding client for `POST {base_url}/embed_text`.
pub struct HttpEmbeddingClient {
    cfg: ProviderConfig,
    agent: ureq::Agent,
    backoff: Duration,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

impl HttpEmbeddingClient {
    pub fn new(cfg: ProviderConfig) -> Self {
        let agent = agent_for(&cfg);
        Self {
            cfg,
            agent,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn url(&self) -> String {
        endpoint(&self.cfg.base_url, "/embed_text")
    }
}

impl EmbeddingProvider for HttpEmbeddingClient {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let body = json!({ "texts": texts });
        let url = self.url();
        with_retries(self.cfg.retries, self.backoff, |_| {
            let id = next_request_id("embed");
            let v = post_json(&self.agent, &self.cfg, &url, &id, &body)?;
            let parsed: EmbedResponse = serde_json::from_value(v).map_err(|e| Error::Transport {
                request_id: id.clone(),
                message: format!("malformed embedding response: {e}"),
            })?;
            if parsed.embeddings.len() != texts.len() {
                return Err(Error::Transport {
                    request_id: id,
                    message: format!(
                        "asked for {} embeddings, received {}",
                        texts.len(),
                        parsed.embeddings.len()
                    ),
                });
            }
            Ok(parsed.embeddings)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::ImagePayload;
    use crate::providers::PromptKind;

    #[test]
    fn retries_transient_then_succeeds() {
        let mut calls = 0;
        let out = with_retries(2, Duration::ZERO, |_| {
            calls += 1;
            if calls <= 2 {
                Err(Error::Timeout { request_id: "x".into() })
            } else {
                Ok(7)
            }
        });
        assert_eq!(out.unwrap(), 7);
        assert_eq!(calls, 3);
    }

    #[test]
    fn no_retry_for_auth_or_exhausted_budget() {
        let mut calls = 0;
        let out: Result<()> = with_retries(5, Duration::ZERO, |_| {
            calls += 1;
            Err(Error::Auth {
                request_id: "x".into(),
                message: "no".into(),
            })
        });
        assert!(matches!(out, Err(Error::Auth { .. })));
        assert_eq!(calls, 1);

        let mut calls = 0;
        let out: Result<()> = with_retries(1, Duration::ZERO, |_| {
            calls += 1;
            Err(Error::Transport {
                request_id: "x".into(),
                message: "down".into(),
            })
        });
        assert!(out.is_err());
        assert_eq!(calls, 2);
    }

    #[test]
    fn body_interleaves_images_at_marker() {
        let client = OpenAiChatClient::new(ProviderConfig {
            model: "m".into(),
            ..Default::default()
        });
        let req = ChatRequest {
            kind: PromptKind::Answer,
            round: 1,
            attempt: 0,
            prompt_text: format!("head {FRAME_TOKENS} tail"),
            frames: vec![1, 3],
            images: vec![
                ImagePayload { index: 3, mime: "image/png".into(), bytes: vec![2] },
                ImagePayload { index: 1, mime: "image/jpeg".into(), bytes: vec![1] },
            ],
            temperature: 0.0,
            max_tokens: 8,
        };
        let body = client.request_body(&req);
        let parts = body["messages"][0]["content"].as_array().unwrap();
        assert_eq!(parts.len(), 4);
        assert_eq!(parts[0]["text"], "head ");
        assert!(parts[1]["image_url"]["url"].as_str().unwrap().starts_with("data:image/jpeg;base64,"));
        assert!(parts[2]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
        assert_eq!(parts[3]["text"], " tail");
        assert_eq!(body["temperature"], 0.0);
    }

    #[test]
    fn urls() {
        let mk = |base: &str| {
            OpenAiChatClient::new(ProviderConfig {
                base_url: base.into(),
                ..Default::default()
            })
            .url()
        };
        assert_eq!(mk("http://h:1"), "http://h:1/v1/chat/completions");
        assert_eq!(mk("http://h:1/v1/"), "http://h:1/v1/chat/completions");
        let e = HttpEmbeddingClient::new(ProviderConfig {
            base_url: "http://h:2/".into(),
            ..Default::default()
        });
        assert_eq!(e.url(), "http://h:2/embed_text");
    }

    #[test]
    fn completion_text_shapes() {
        let s = json!({"choices": [{"message": {"content": "B"}}]});
        assert_eq!(completion_text(&s, "x").unwrap(), "B");
        let parts = json!({"choices": [{"message": {"content": [{"type": "text", "text": "C"}]}}]});
        assert_eq!(completion_text(&parts, "x").unwrap(), "C");
        assert!(completion_text(&json!({}), "x").is_err());
    }
}
