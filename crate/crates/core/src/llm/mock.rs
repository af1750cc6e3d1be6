//! Deterministic offline backend for tests and dry runs.
//!
//! A script is an ordered list of `pattern -> response` rules matched
//! case-insensitively as substrings of the last user message, plus an
//! extractive fallback that returns the first N sentences of that message.
//! Output depends only on (script, request): no clock, no randomness.

use serde::{Deserialize, Serialize};

use super::{FinishReason, GenerationRequest, GenerationResponse, Generator, LlmError, Usage};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    /// Case-insensitive substring matched against the last user message.
    pub pattern: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    /// Fallback: number of leading sentences of the last user message to
    /// echo back when no rule matches.
    pub fallback_sentences: usize,
}

impl Default for MockScript {
    fn default() -> Self {
        Self {
            rules: Vec::new(),
            fallback_sentences: 2,
        }
    }
}

impl MockScript {
    pub fn with_rule(mut self, pattern: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(MockRule {
            pattern: pattern.into(),
            response: response.into(),
        });
        self
    }
}

/// Pure scripted generation: first matching rule wins, otherwise the
/// extractive fallback applies. Never fails.
pub fn mock_generate(script: &MockScript, request: &GenerationRequest) -> GenerationResponse {
    let prompt = request.last_user_content().unwrap_or("");
    let lower = prompt.to_lowercase();
    let content = script
        .rules
        .iter()
        .find(|rule| !rule.pattern.is_empty() && lower.contains(&rule.pattern.to_lowercase()))
        .map(|rule| rule.response.clone())
        .unwrap_or_else(|| text::first_sentences(prompt, script.fallback_sentences));
    GenerationResponse {
        usage: Some(Usage {
            prompt_tokens: text::estimate_tokens(prompt) as u64,
            completion_tokens: text::estimate_tokens(&content) as u64,
        }),
        content,
        finish_reason: FinishReason::Stop,
    }
}

/// [`Generator`] wrapper around a [`MockScript`].
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    script: MockScript,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self { script }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl Generator for MockBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        request.validate()?;
        Ok(mock_generate(&self.script, request))
    }
}
