//! Content indicators: click-bait score of the title, readability and
//! subjectivity of the body, and byline presence.
//!
//! These are deterministic stand-ins for trained models. English only;
//! other languages get defined but not meaningful scores.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::Article;
use crate::text::{alphabetic_tokens, contains_phrase, fold, parse_lexicon};

const BUNDLED_HYPERBOLE: &str = include_str!("../assets/hyperbole.txt");
const BUNDLED_SUBJECTIVE: &str = include_str!("../assets/subjective.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContentError {
    #[error("title is empty")]
    EmptyTitle,
    #[error("text has no words")]
    NoWords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentIndicators {
    pub clickbait: f64,
    pub readability_fre: f64,
    pub subjectivity: f64,
    pub has_byline: bool,
}

/// Pluggable title scorer; the heuristic feature table is the default.
pub trait ClickbaitModel: Send + Sync {
    fn score(&self, title: &str) -> Result<f64, ContentError>;
}

/// Weighted title features, each counted at most once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TitleFeature {
    SecondPerson,
    LeadingDemonstrative,
    LeadingNumeral,
    QuestionMark,
    Hyperbole,
    AllCapsWord,
    ExclamationOrEllipsis,
}

impl TitleFeature {
    pub const ALL: [TitleFeature; 7] = [
        TitleFeature::SecondPerson,
        TitleFeature::LeadingDemonstrative,
        TitleFeature::LeadingNumeral,
        TitleFeature::QuestionMark,
        TitleFeature::Hyperbole,
        TitleFeature::AllCapsWord,
        TitleFeature::ExclamationOrEllipsis,
    ];

    pub fn weight(self) -> u32 {
        match self {
            TitleFeature::SecondPerson => 2,
            TitleFeature::LeadingDemonstrative => 2,
            TitleFeature::LeadingNumeral => 1,
            TitleFeature::QuestionMark => 1,
            TitleFeature::Hyperbole => 3,
            TitleFeature::AllCapsWord => 1,
            TitleFeature::ExclamationOrEllipsis => 1,
        }
    }
}

/// Sum of all feature weights; a title hitting every feature scores 1.
pub const CLICKBAIT_MAX_WEIGHT: u32 = 11;

const SECOND_PERSON: &[&str] = &[
    "you", "your", "yours", "yourself", "yourselves", "you're", "you'll", "you've", "you'd",
];
const DEMONSTRATIVES: &[&str] = &["this", "these", "here's"];

#[derive(Debug, Clone)]
pub struct HeuristicClickbait {
    hyperbole: BTreeSet<String>,
}

impl Default for HeuristicClickbait {
    fn default() -> Self {
        HeuristicClickbait::new(parse_lexicon(BUNDLED_HYPERBOLE))
    }
}

fn word_tokens(title: &str) -> Vec<String> {
    fold(title)
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

impl HeuristicClickbait {
    pub fn new(hyperbole: BTreeSet<String>) -> Self {
        HeuristicClickbait { hyperbole }
    }

    pub fn features(&self, title: &str) -> Result<BTreeSet<TitleFeature>, ContentError> {
        let title = title.trim();
        if title.is_empty() {
            return Err(ContentError::EmptyTitle);
        }
        let folded = fold(title);
        let tokens = word_tokens(title);
        let first = tokens.first().map(String::as_str).unwrap_or_default();

        let mut hits = BTreeSet::new();
        if tokens.iter().any(|t| SECOND_PERSON.contains(&t.as_str())) {
            hits.insert(TitleFeature::SecondPerson);
        }
        if DEMONSTRATIVES.contains(&first) {
            hits.insert(TitleFeature::LeadingDemonstrative);
        }
        if first.starts_with(|c: char| c.is_ascii_digit())
            && first.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.')
        {
            hits.insert(TitleFeature::LeadingNumeral);
        }
        if title.contains('?') {
            hits.insert(TitleFeature::QuestionMark);
        }
        if self.hyperbole.iter().any(|p| contains_phrase(&folded, p)) {
            hits.insert(TitleFeature::Hyperbole);
        }
        let shouting = title.split_whitespace().any(|w| {
            let letters: Vec<char> = w.chars().filter(|c| c.is_alphabetic()).collect();
            letters.len() >= 3 && letters.iter().all(|c| c.is_uppercase())
        });
        if shouting {
            hits.insert(TitleFeature::AllCapsWord);
        }
        if title.contains('!') || title.contains('\u{2026}') || title.contains("...") {
            hits.insert(TitleFeature::ExclamationOrEllipsis);
        }
        Ok(hits)
    }
}

impl ClickbaitModel for HeuristicClickbait {
    fn score(&self, title: &str) -> Result<f64, ContentError> {
        let weight: u32 = self.features(title)?.iter().map(|f| f.weight()).sum();
        Ok(f64::from(weight) / f64::from(CLICKBAIT_MAX_WEIGHT))
    }
}

pub fn clickbait_score(title: &str) -> Result<f64, ContentError> {
    HeuristicClickbait::default().score(title)
}

/// Vowel-group syllable estimate with a silent trailing "e"; at least 1.
pub fn syllables(word: &str) -> usize {
    let letters: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0;
    let mut prev_vowel = false;
    for &c in &letters {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = letters.len();
    let silent_e = n >= 2
        && letters[n - 1] == 'e'
        && !is_vowel(letters[n - 2])
        && !(n >= 3 && letters[n - 2] == 'l' && !is_vowel(letters[n - 3]));
    if silent_e && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextCounts {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
}

/// Words are whitespace tokens containing a letter. A run of `.`, `!` or `?`
/// ends a sentence when at least one word appeared since the previous
/// sentence end; trailing words without a terminator form a last sentence.
pub fn text_counts(body: &str) -> TextCounts {
    let mut words = 0;
    let mut sentences = 0;
    let mut syllable_total = 0;
    let mut open_sentence = false;
    for token in body.split_whitespace() {
        let is_word = token.chars().any(char::is_alphabetic);
        if is_word {
            words += 1;
            syllable_total += syllables(token);
        }
        let mut word_marked = false;
        let mut prev_term = false;
        for c in token.chars() {
            let term = matches!(c, '.' | '!' | '?');
            if is_word && !word_marked && c.is_alphabetic() {
                open_sentence = true;
                word_marked = true;
            }
            if term && !prev_term && open_sentence {
                sentences += 1;
                open_sentence = false;
            }
            prev_term = term;
        }
    }
    if open_sentence {
        sentences += 1;
    }
    TextCounts {
        words,
        sentences: sentences.max(1),
        syllables: syllable_total,
    }
}

/// Flesch Reading Ease.
pub fn readability_score(body: &str) -> Result<f64, ContentError> {
    let counts = text_counts(body);
    if counts.words == 0 {
        return Err(ContentError::NoWords);
    }
    let words = counts.words as f64;
    Ok(206.835
        - 1.015 * (words / counts.sentences as f64)
        - 84.6 * (counts.syllables as f64 / words))
}

/// Share of alphabetic tokens found in `lexicon`.
pub fn subjectivity_score(body: &str, lexicon: &BTreeSet<String>) -> Result<f64, ContentError> {
    let tokens = alphabetic_tokens(body);
    if tokens.is_empty() {
        return Err(ContentError::NoWords);
    }
    let hits = tokens.iter().filter(|t| lexicon.contains(t.as_str())).count();
    Ok(hits as f64 / tokens.len() as f64)
}

const GENERIC_STAFF: &[&str] = &["staff", "admin", "newsroom"];

pub fn detect_byline(article: &Article) -> bool {
    article.byline.as_deref().is_some_and(|b| {
        let b = b.trim();
        !b.is_empty() && !GENERIC_STAFF.contains(&b.to_lowercase().as_str())
    })
}

pub fn bundled_subjective_lexicon() -> BTreeSet<String> {
    parse_lexicon(BUNDLED_SUBJECTIVE)
}

#[derive(Clone)]
pub struct ContentAnalyzer {
    clickbait: Arc<dyn ClickbaitModel>,
    subjective: BTreeSet<String>,
}

impl std::fmt::Debug for ContentAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContentAnalyzer")
            .field("subjective_terms", &self.subjective.len())
            .finish_non_exhaustive()
    }
}

impl Default for ContentAnalyzer {
    fn default() -> Self {
        ContentAnalyzer::new(Arc::new(HeuristicClickbait::default()), bundled_subjective_lexicon())
    }
}

impl ContentAnalyzer {
    pub fn new(clickbait: Arc<dyn ClickbaitModel>, subjective: BTreeSet<String>) -> Self {
        ContentAnalyzer {
            clickbait,
            subjective,
        }
    }

    pub fn analyze(&self, article: &Article) -> Result<ContentIndicators, ContentError> {
        Ok(ContentIndicators {
            clickbait: self.clickbait.score(&article.title)?,
            readability_fre: readability_score(&article.body)?,
            subjectivity: subjectivity_score(&article.body, &self.subjective)?,
            has_byline: detect_byline(article),
        })
    }
}
