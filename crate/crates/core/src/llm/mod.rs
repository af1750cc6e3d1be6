//! Uniform generation interface over a remote HTTP chat-completions backend
//! and a deterministic offline mock.
//!
//! Backends implement [`Generator`] and must be safely callable from many
//! concurrent pipeline workers; the pipeline's layer-1 fan-out cap bounds
//! in-flight requests.

mod http;
mod mock;

pub use http::{BackendConfig, HttpBackend};
pub use mock::{mock_generate, MockBackend, MockRule, MockScript};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// One generation call: model, ordered messages, and decoding knobs.
/// Temperature defaults to 0 for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl GenerationRequest {
    /// Single-user-message request with temperature 0.
    pub fn user(model_id: impl Into<String>, content: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            model_id: model_id.into(),
            messages: vec![Message {
                role: Role::User,
                content: content.into(),
            }],
            temperature: 0.0,
            max_tokens,
        }
    }

    /// At least one user message, no empty contents, sane decoding knobs.
    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(LlmError::InvalidRequest("no user message".into()));
        }
        if self.messages.iter().any(|m| m.content.is_empty()) {
            return Err(LlmError::InvalidRequest("empty message content".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Content of the last user message, if any.
    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub usage: Option<Usage>,
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("backend unavailable after {attempts} attempt(s): {last}")]
    BackendUnavailable { attempts: u32, last: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid backend config: {0}")]
    BadConfig(String),
}

/// A text generation backend. Implementations must be `Sync`: the pipeline
/// calls `generate` from several worker threads at once.
pub trait Generator: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, LlmError>;
}
