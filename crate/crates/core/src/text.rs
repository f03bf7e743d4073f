//! Tokenizing helpers shared by the prompt readers and the lexical metrics.

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

const STOPWORDS_TXT: &str = include_str!("../data/stopwords.txt");

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Lowercased word tokens (letters, digits, inner apostrophes).
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\'').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Tokens with stop-words removed, in order of appearance.
pub fn content_words(text: &str) -> Vec<String> {
    let stop = stopwords();
    tokens(text).into_iter().filter(|t| !stop.contains(t.as_str())).collect()
}

pub fn content_set(text: &str) -> BTreeSet<String> {
    content_words(text).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_folds_and_drops_stopwords() {
        assert_eq!(content_words("The Rule, NOW stands!"), vec!["rule", "now", "stands"]);
        assert!(content_set("it is what it is").is_empty());
    }
}
