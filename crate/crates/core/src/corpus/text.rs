use std::collections::HashSet;

const ENGLISH_STOP_WORDS: &str = include_str!("stopwords_en.txt");

/// Lowercases `raw` and strips leading and trailing punctuation.
pub fn normalize_token(raw: &str) -> String {
    raw.trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace() || is_typographic_punct(c))
        .to_lowercase()
}

fn is_typographic_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2018}'
            | '\u{2019}'
            | '\u{201c}'
            | '\u{201d}'
            | '\u{2013}'
            | '\u{2014}'
            | '\u{2026}'
            | '\u{00bf}'
            | '\u{00a1}'
    )
}

/// Splits free text on whitespace into normalized tokens, dropping tokens
/// that are empty after normalization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .collect()
}

/// A fixed stop-word list.
#[derive(Debug, Clone)]
pub struct StopWords {
    words: HashSet<String>,
}

impl StopWords {
    /// The embedded English function-word list.
    pub fn english() -> Self {
        Self::from_list(ENGLISH_STOP_WORDS)
    }

    /// Parses one word per line; blank lines and `#` comments are skipped.
    pub fn from_list(list: &str) -> Self {
        let words = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        StopWords { words }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn predicate(&self) -> impl Fn(&str) -> bool + '_ {
        move |w| self.contains(w)
    }
}

impl Default for StopWords {
    fn default() -> Self {
        Self::english()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_case_and_edge_punctuation() {
        assert_eq!(normalize_token("McIntire?"), "mcintire");
        assert_eq!(normalize_token("\"Hello,\""), "hello");
        assert_eq!(normalize_token("don't"), "don't");
        assert_eq!(normalize_token("--"), "");
    }

    #[test]
    fn tokenizes_question() {
        assert_eq!(
            tokenize("In which year was John McIntire murdered?"),
            ["in", "which", "year", "was", "john", "mcintire", "murdered"]
        );
        assert!(tokenize("  ?! ").is_empty());
    }

    #[test]
    fn english_list_is_loaded() {
        let sw = StopWords::english();
        assert_eq!(sw.len(), 179);
        for w in ["the", "in", "which", "was", "is", "it"] {
            assert!(sw.contains(w), "{w}");
        }
        assert!(!sw.contains("murdered"));
        assert!(!sw.contains("year"));
    }
}
