//! Budget-bounded post segmentation.
//!
//! Posts are split into segments that fit a token budget so that each
//! segment, once embedded in the layer-1 prompt, fits a small context
//! window. Segmentation is greedy over sentences and ignores chronology;
//! sentences longer than the whole budget are split at word boundaries.

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::text;

/// A contiguous, budget-bounded slice of one post's text; the unit of
/// layer-1 summarization. Concatenating a post's segments in `seg_index`
/// order reproduces the post's word sequence exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub doc_id: String,
    pub seg_index: usize,
    pub text: String,
    pub token_estimate: usize,
}

/// Split `text` into segments of at most `budget` words.
///
/// Greedy fill by sentence boundaries (a sentence ends after a word whose
/// last character is `.`, `!`, or `?`): sentences are appended while they
/// fit, a sentence that does not fit starts the next segment, and a sentence
/// longer than the whole budget is split at word boundaries into
/// budget-sized chunks, the last of which stays open for further sentences.
pub fn segment_post(
    doc_id: &str,
    input: &str,
    budget: usize,
) -> Result<Vec<Segment>, PipelineError> {
    if budget == 0 {
        return Err(PipelineError::Config(
            "segment budget must be positive".into(),
        ));
    }
    let word_list: Vec<&str> = text::words(input).collect();
    if word_list.is_empty() {
        return Err(PipelineError::EmptyText);
    }

    let mut segments: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for range in text::sentence_ranges(&word_list) {
        let sentence = &word_list[range];
        if sentence.len() > budget {
            if !current.is_empty() {
                segments.push(std::mem::take(&mut current));
            }
            let mut chunks = sentence.chunks(budget).peekable();
            while let Some(chunk) = chunks.next() {
                if chunks.peek().is_some() {
                    segments.push(chunk.to_vec());
                } else {
                    current = chunk.to_vec();
                }
            }
            if current.len() == budget {
                segments.push(std::mem::take(&mut current));
            }
        } else if current.len() + sentence.len() <= budget {
            current.extend_from_slice(sentence);
        } else {
            segments.push(std::mem::take(&mut current));
            current = sentence.to_vec();
        }
    }
    if !current.is_empty() {
        segments.push(current);
    }

    Ok(segments
        .into_iter()
        .enumerate()
        .map(|(seg_index, words)| Segment {
            doc_id: doc_id.to_string(),
            seg_index,
            token_estimate: words.len(),
            text: words.join(" "),
        })
        .collect())
}
