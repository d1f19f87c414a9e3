use std::collections::BTreeSet;

use rand::Rng;

use crate::corpus::StopWords;

/// Short function words used to pad passages. All are on the English
/// stop-word list.
pub const FILLER: &[&str] = &[
    "the", "of", "and", "to", "in", "is", "was", "for", "on", "with", "as", "by", "at", "from", "that", "it", "an",
    "a", "be", "are", "this", "or", "has", "had", "were", "into",
];

/// Question openers. All are on the English stop-word list.
pub const INTERROGATIVES: &[&str] = &["what", "which", "who", "when", "where", "how", "why"];

/// Letters drawn uniformly; syllable-structured words share too many
/// character positions and blur string embeddings together.
fn pseudo_word(rng: &mut impl Rng) -> String {
    let n = rng.random_range(3..=8);
    (0..n).map(|_| char::from(b'a' + rng.random_range(0..26u8))).collect()
}

/// `count` distinct pseudo-words that are not stop words, in generation
/// order.
pub(crate) fn generate_words(rng: &mut impl Rng, count: usize, stop_words: &StopWords) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = pseudo_word(rng);
        if !stop_words.contains(&w) && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}
