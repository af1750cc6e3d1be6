//! Shared text primitives: word splitting, tokenization, and word-level
//! sentence grouping.
//!
//! Every budget and count in the crate is defined in terms of these rules so
//! that retrieval, segmentation, and evaluation agree on what a "word" is.

/// Whitespace-separated words of `text`, in order.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

/// Default token estimator: the number of whitespace-separated words.
///
/// `""` estimates to 0.
pub fn estimate_tokens(text: &str) -> usize {
    words(text).count()
}

/// Analyzer used for indexing and keyword matching: lowercased maximal runs
/// of Unicode letters and digits. Everything else is a separator.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn ends_sentence(word: &str) -> bool {
    matches!(word.chars().last(), Some('.') | Some('!') | Some('?'))
}

/// Group a word sequence into sentences.
///
/// A sentence boundary falls after any word whose final character is one of
/// `.`, `!`, or `?`; a trailing run of words without a terminator forms the
/// last sentence. Returned ranges partition `0..words.len()`.
pub fn sentence_ranges(words: &[&str]) -> Vec<std::ops::Range<usize>> {
    let mut ranges = Vec::new();
    let mut start = 0;
    for (i, word) in words.iter().enumerate() {
        if ends_sentence(word) {
            ranges.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < words.len() {
        ranges.push(start..words.len());
    }
    ranges
}

/// First `n` sentences of `text` under the word-level sentence rule, joined
/// by single spaces. Fewer sentences than `n` returns the whole word
/// sequence.
pub fn first_sentences(text: &str, n: usize) -> String {
    if n == 0 {
        return String::new();
    }
    let word_list: Vec<&str> = words(text).collect();
    let ranges = sentence_ranges(&word_list);
    let end = if ranges.len() <= n {
        word_list.len()
    } else {
        ranges[n - 1].end
    };
    word_list[..end].join(" ")
}
