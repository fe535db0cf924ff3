//! Chat-model abstraction shared by construction, retrieval and judging.
//!
//! [`ChatModel`] is implemented by [`HttpModel`] (a chat-completions style
//! JSON endpoint) and [`ScriptedMock`] (pure function of the transcript,
//! used by every test).

mod http;
mod mock;

use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpConfig, HttpModel};
pub use mock::{Matcher, MockScript, Responder, Rule, Scope, ScriptedMock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// A resolved binary attachment (image bytes or a text record).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaPayload {
    pub media_id: String,
    pub mime: String,
    pub data: Vec<u8>,
}

impl MediaPayload {
    pub fn is_text(&self) -> bool {
        self.mime.starts_with("text/")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    pub media: Vec<MediaPayload>,
}

impl ChatTurn {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            text: text.into(),
            media: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            media: Vec::new(),
        }
    }

    pub fn user_with_media(text: impl Into<String>, media: Vec<MediaPayload>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            media,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
            media: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelResponse {
    pub text: String,
    pub usage: Option<Usage>,
}

impl ModelResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("conversation is empty")]
    EmptyConversation,
    #[error("last turn must be a user turn")]
    LastTurnNotUser,
    #[error("assistant turn {0} carries media")]
    AssistantMedia(usize),
    #[error("request {request_id} timed out after {attempts} attempt(s)")]
    Timeout { request_id: String, attempts: u32 },
    #[error("request {request_id} failed with HTTP {status}: {body}")]
    Http {
        request_id: String,
        status: u16,
        body: String,
    },
    #[error("request {request_id}: transport error: {message}")]
    Transport { request_id: String, message: String },
    #[error("request {request_id}: malformed response: {message}")]
    MalformedResponse { request_id: String, message: String },
    #[error("request {request_id}: no scripted rule matched (strict mock)")]
    NoMatch { request_id: String },
    #[error("model configuration: {0}")]
    Config(String),
}

/// Checks the shape every backend requires before sending.
pub fn validate_conversation(conversation: &[ChatTurn]) -> Result<(), ModelError> {
    let last = conversation.last().ok_or(ModelError::EmptyConversation)?;
    if last.role != Role::User {
        return Err(ModelError::LastTurnNotUser);
    }
    if let Some(i) = conversation
        .iter()
        .position(|t| t.role == Role::Assistant && !t.media.is_empty())
    {
        return Err(ModelError::AssistantMedia(i));
    }
    Ok(())
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, conversation: &[ChatTurn]) -> Result<ModelResponse, ModelError>;

    /// Upper bound on useful concurrent calls.
    fn max_parallelism(&self) -> usize {
        1
    }
}

impl<M: ChatModel + ?Sized> ChatModel for &M {
    fn complete(&self, conversation: &[ChatTurn]) -> Result<ModelResponse, ModelError> {
        (**self).complete(conversation)
    }

    fn max_parallelism(&self) -> usize {
        (**self).max_parallelism()
    }
}

impl<M: ChatModel + ?Sized> ChatModel for std::sync::Arc<M> {
    fn complete(&self, conversation: &[ChatTurn]) -> Result<ModelResponse, ModelError> {
        (**self).complete(conversation)
    }

    fn max_parallelism(&self) -> usize {
        (**self).max_parallelism()
    }
}

impl<M: ChatModel + ?Sized> ChatModel for Box<M> {
    fn complete(&self, conversation: &[ChatTurn]) -> Result<ModelResponse, ModelError> {
        (**self).complete(conversation)
    }

    fn max_parallelism(&self) -> usize {
        (**self).max_parallelism()
    }
}

/// Wraps a model and keeps every conversation it was asked to complete.
pub struct Recorder<M> {
    inner: M,
    log: Mutex<Vec<Vec<ChatTurn>>>,
}

impl<M: ChatModel> Recorder<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn transcripts(&self) -> Vec<Vec<ChatTurn>> {
        self.log.lock().expect("recorder lock").clone()
    }

    pub fn clear(&self) {
        self.log.lock().expect("recorder lock").clear();
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: ChatModel> ChatModel for Recorder<M> {
    fn complete(&self, conversation: &[ChatTurn]) -> Result<ModelResponse, ModelError> {
        self.log.lock().expect("recorder lock").push(conversation.to_vec());
        self.inner.complete(conversation)
    }

    fn max_parallelism(&self) -> usize {
        self.inner.max_parallelism()
    }
}

/// Counting semaphore bounding in-flight requests.
pub(crate) struct ConcurrencyLimit {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub(crate) struct Permit<'a>(&'a ConcurrencyLimit);

impl ConcurrencyLimit {
    pub(crate) fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limit lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limit lock");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("limit lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Runs `f` over `items` with at most `parallelism` concurrent calls,
/// returning results in input order.
pub fn fan_out<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let parallelism = parallelism.max(1);
    if parallelism == 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(parallelism) {
        let results: Vec<R> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|item| s.spawn(|| f(item))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fan-out worker panicked"))
                .collect()
        });
        out.extend(results);
    }
    out
}
