//! The one tokenizer used everywhere: corpus texts, queries, object labels
//! and the inverted index all go through `tokenize` so that term spaces line
//! up bit-exactly across modules.

/// Lowercase the input and split on runs of non-alphanumeric characters.
/// Empty fragments are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}
