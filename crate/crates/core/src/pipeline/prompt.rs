//! Prompt templates and the no-answer sentinel convention.
//!
//! Templates are plain text with `{query}` and `{content}` placeholders,
//! each required exactly once. Layer-1 templates must instruct the model to
//! reply with the configured sentinel, verbatim, when the content holds no
//! answer; detection is a normalized prefix check on the reply.

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::text;

pub const QUERY_PLACEHOLDER: &str = "{query}";
pub const CONTENT_PLACEHOLDER: &str = "{content}";

/// Default sentinel a layer-1 model emits when a segment holds no answer.
pub const DEFAULT_NO_ANSWER_SENTINEL: &str = "NO ANSWER FOUND";

pub const DEFAULT_LAYER1_TEMPLATE: &str = "\
You are given a question and an excerpt from a social media post.

Question: {query}

Excerpt:
{content}

Summarize only the information in the excerpt that answers the question. \
Do not add anything that is not in the excerpt. If the excerpt contains no \
information that answers the question, reply exactly: NO ANSWER FOUND";

pub const DEFAULT_LAYER2_TEMPLATE: &str = "\
You are given a question and several short summaries drawn from social media posts.

Question: {query}

Summaries:
{content}

Synthesize one coherent answer to the question from the summaries. Do not \
add facts that are not present in the summaries.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    One,
    Two,
}

/// A validated prompt template for one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub layer: Layer,
    text: String,
}

impl PromptTemplate {
    /// Validate that both placeholders appear exactly once.
    pub fn new(layer: Layer, template: impl Into<String>) -> Result<Self, PipelineError> {
        let template = template.into();
        for placeholder in [QUERY_PLACEHOLDER, CONTENT_PLACEHOLDER] {
            match template.matches(placeholder).count() {
                1 => {}
                0 => {
                    return Err(PipelineError::Template(format!(
                        "template is missing the {placeholder} placeholder"
                    )))
                }
                n => {
                    return Err(PipelineError::Template(format!(
                        "template must contain {placeholder} exactly once, found {n}"
                    )))
                }
            }
        }
        Ok(Self {
            layer,
            text: template,
        })
    }

    pub fn default_layer1() -> Self {
        Self::new(Layer::One, DEFAULT_LAYER1_TEMPLATE).expect("default layer-1 template is valid")
    }

    pub fn default_layer2() -> Self {
        Self::new(Layer::Two, DEFAULT_LAYER2_TEMPLATE).expect("default layer-2 template is valid")
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    fn substitute(&self, query: &str, content: &str) -> String {
        self.text
            .replacen(QUERY_PLACEHOLDER, query, 1)
            .replacen(CONTENT_PLACEHOLDER, content, 1)
    }

    /// Token estimate of the rendered prompt with empty content: the fixed
    /// cost the template plus query add to every call.
    pub fn overhead(&self, query: &str) -> usize {
        text::estimate_tokens(&self.substitute(query, ""))
    }
}

/// Substitute the placeholders and enforce the prompt budget.
///
/// The caller is responsible for shrinking `content` on a budget overflow;
/// the error reports the estimate so callers can size down.
pub fn render_prompt(
    template: &PromptTemplate,
    query: &str,
    content: &str,
    budget: usize,
) -> Result<String, PipelineError> {
    let rendered = template.substitute(query, content);
    let estimate = text::estimate_tokens(&rendered);
    if estimate > budget {
        return Err(PipelineError::BudgetOverflow { estimate, budget });
    }
    Ok(rendered)
}

/// True iff `summary` begins with `sentinel` after trimming surrounding
/// whitespace/punctuation and case folding. Trailing text after the sentinel
/// prefix does not rescue a summary.
pub fn detect_no_answer(summary: &str, sentinel: &str) -> bool {
    let trim = |s: &str| {
        s.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
            .to_lowercase()
    };
    let sentinel = trim(sentinel);
    if sentinel.is_empty() {
        return false;
    }
    trim(summary).starts_with(&sentinel)
}
