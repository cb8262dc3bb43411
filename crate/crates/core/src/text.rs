//! Tokenization and phrase matching shared by the lexicon-driven indicators.

use std::collections::BTreeSet;

/// Lowercases and folds typographic apostrophes so lexicon phrases like
/// "won't" match titles typed with a curly quote.
pub fn fold(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' | '\u{02bc}' => '\'',
            _ => c,
        })
        .flat_map(char::to_lowercase)
        .collect()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Counts non-overlapping occurrences of `phrase` in `haystack` that start and
/// end on token boundaries. Both arguments must already be folded.
pub fn count_phrase(haystack: &str, phrase: &str) -> usize {
    if phrase.is_empty() {
        return 0;
    }
    let mut count = 0;
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(phrase) {
        let start = from + rel;
        let end = start + phrase.len();
        let before_ok = haystack[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !is_word_char(c));
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            count += 1;
            from = end;
        } else {
            // advance by one char to find overlapping candidates
            from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
        }
        if from >= haystack.len() {
            break;
        }
    }
    count
}

pub fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    count_phrase(haystack, phrase) > 0
}

/// Maximal runs of alphabetic characters, lowercased.
pub fn alphabetic_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Parses a one-term-per-line lexicon. Blank lines and `#` comments are skipped.
pub fn parse_lexicon(source: &str) -> BTreeSet<String> {
    source
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(fold)
        .collect()
}
