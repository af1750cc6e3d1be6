//! Text-level measures: letter/word/sentence counts, the Coleman-Liau
//! readability index, and the default token count.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::text;

/// Raw counts feeding the readability formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextUnitCounts {
    pub letters: usize,
    pub words: usize,
    pub sentences: usize,
}

/// Count letters (Unicode alphabetic characters), words (whitespace-separated
/// runs), and sentences (maximal runs of `.`, `!`, `?`, floored at 1).
pub fn count_text_units(input: &str) -> Result<TextUnitCounts, EvalError> {
    if input.trim().is_empty() {
        return Err(EvalError::EmptyText);
    }
    let letters = input.chars().filter(|c| c.is_alphabetic()).count();
    let words = text::estimate_tokens(input);
    let mut sentences = 0;
    let mut in_run = false;
    for ch in input.chars() {
        let terminator = matches!(ch, '.' | '!' | '?');
        if terminator && !in_run {
            sentences += 1;
        }
        in_run = terminator;
    }
    Ok(TextUnitCounts {
        letters,
        words,
        sentences: sentences.max(1),
    })
}

/// Coleman-Liau readability index:
/// `0.0588 * L - 0.296 * S - 15.8`, where `L` is letters per 100 words and
/// `S` is sentences per 100 words. Approximates the US school grade level
/// needed to understand the text.
pub fn coleman_liau(input: &str) -> Result<f64, EvalError> {
    let counts = count_text_units(input)?;
    let per_100 = 100.0 / counts.words as f64;
    let l = counts.letters as f64 * per_100;
    let s = counts.sentences as f64 * per_100;
    Ok(0.0588 * l - 0.296 * s - 15.8)
}

/// Default token count: whitespace-separated words. `""` counts 0.
pub fn token_count(input: &str) -> usize {
    text::estimate_tokens(input)
}
