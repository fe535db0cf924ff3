//! Chat-completions style JSON backend.
//!
//! `POST {base_url}/chat/completions` with
//! `{"model": ..., "messages": [{"role": ..., "content": ...}]}`. Media are
//! sent inline as base64 `data:` URLs. Transient failures (timeouts,
//! connection errors, HTTP 408/429/5xx) are retried with exponential backoff.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{validate_conversation, ChatModel, ChatTurn, ConcurrencyLimit, ModelError, ModelResponse, Role, Usage};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub parallelism: usize,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout_ms: 60_000,
            max_retries: 3,
            backoff_base_ms: 500,
            parallelism: 4,
        }
    }

    /// Reads `MODEL_BASE_URL`, `MODEL_NAME`, `MODEL_API_KEY` and
    /// `MODEL_TIMEOUT_MS`.
    pub fn from_env() -> Result<Self, ModelError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let base = var("MODEL_BASE_URL").ok_or_else(|| ModelError::Config("MODEL_BASE_URL is not set".into()))?;
        let model = var("MODEL_NAME").ok_or_else(|| ModelError::Config("MODEL_NAME is not set".into()))?;
        let mut cfg = Self::new(base, model);
        cfg.api_key = var("MODEL_API_KEY");
        if let Some(t) = var("MODEL_TIMEOUT_MS") {
            cfg.timeout_ms = t
                .parse()
                .map_err(|_| ModelError::Config(format!("MODEL_TIMEOUT_MS={t:?} is not an integer")))?;
        }
        Ok(cfg)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub struct HttpModel {
    config: HttpConfig,
    agent: ureq::Agent,
    limit: ConcurrencyLimit,
    next_request: AtomicU64,
    retries: AtomicU64,
}

enum Attempt {
    Done(ModelResponse),
    Retry(ModelError),
    Fail(ModelError),
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpModel {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let limit = ConcurrencyLimit::new(config.parallelism);
        Self {
            config,
            agent,
            limit,
            next_request: AtomicU64::new(1),
            retries: AtomicU64::new(0),
        }
    }

    pub fn from_env() -> Result<Self, ModelError> {
        Ok(Self::new(HttpConfig::from_env()?))
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// Total retries performed by this client so far.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn request_body(&self, conversation: &[ChatTurn]) -> Value {
        let messages: Vec<Value> = conversation
            .iter()
            .map(|turn| {
                let role = match turn.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                if turn.media.is_empty() {
                    return json!({ "role": role, "content": turn.text });
                }
                let mut parts = vec![json!({ "type": "text", "text": turn.text })];
                for m in &turn.media {
                    if m.is_text() {
                        parts.push(json!({
                            "type": "text",
                            "text": format!("[{}]\n{}", m.media_id, String::from_utf8_lossy(&m.data)),
                        }));
                    } else {
                        let b64 = base64::engine::general_purpose::STANDARD.encode(&m.data);
                        parts.push(json!({
                            "type": "image_url",
                            "image_url": { "url": format!("data:{};base64,{b64}", m.mime) },
                        }));
                    }
                }
                json!({ "role": role, "content": parts })
            })
            .collect();
        json!({ "model": self.config.model, "messages": messages })
    }

    fn attempt(&self, request_id: &str, body: &Value, attempt: u32) -> Attempt {
        let mut req = self.agent.post(&self.config.endpoint());
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Retry(ModelError::Timeout {
                    request_id: request_id.to_string(),
                    attempts: attempt + 1,
                })
            }
            Err(e @ (ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound)) => {
                return Attempt::Retry(ModelError::Transport {
                    request_id: request_id.to_string(),
                    message: e.to_string(),
                })
            }
            Err(e) => {
                return Attempt::Fail(ModelError::Transport {
                    request_id: request_id.to_string(),
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status().as_u16();
        let mut body = resp.into_body();
        if !(200..300).contains(&status) {
            let text = body.read_to_string().unwrap_or_default();
            let err = ModelError::Http {
                request_id: request_id.to_string(),
                status,
                body: text,
            };
            return if status == 408 || status == 429 || status >= 500 {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            };
        }
        let parsed: CompletionBody = match body.read_json() {
            Ok(p) => p,
            Err(e) => {
                return Attempt::Fail(ModelError::MalformedResponse {
                    request_id: request_id.to_string(),
                    message: e.to_string(),
                })
            }
        };
        let Some(choice) = parsed.choices.into_iter().next() else {
            return Attempt::Fail(ModelError::MalformedResponse {
                request_id: request_id.to_string(),
                message: "no choices".into(),
            });
        };
        Attempt::Done(ModelResponse {
            text: choice.message.content.unwrap_or_default(),
            usage: parsed.usage.map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }
}

impl ChatModel for HttpModel {
    fn complete(&self, conversation: &[ChatTurn]) -> Result<ModelResponse, ModelError> {
        validate_conversation(conversation)?;
        let request_id = format!("req-{:06}", self.next_request.fetch_add(1, Ordering::Relaxed));
        let body = self.request_body(conversation);
        let _permit = self.limit.acquire();
        let mut attempt = 0u32;
        loop {
            debug!(%request_id, attempt, "sending chat completion");
            match self.attempt(&request_id, &body, attempt) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.config.max_retries => return Err(e),
                Attempt::Retry(e) => {
                    let delay = self.config.backoff_base_ms.saturating_mul(1 << attempt.min(16));
                    attempt += 1;
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    warn!(%request_id, retry = attempt, delay_ms = delay, error = %e, "retrying model request");
                    std::thread::sleep(Duration::from_millis(delay));
                }
            }
        }
    }

    fn max_parallelism(&self) -> usize {
        self.config.parallelism.max(1)
    }
}
