//! Reach and stance of the social postings that share an article.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{Posting, RawPosting};
use crate::text::{contains_phrase, fold};

const BUNDLED_CUES: &str = include_str!("../assets/stance_cues.tsv");

pub const DEFAULT_TAU: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SocialError {
    #[error("{scores} scores but {reaches} reaches")]
    LengthMismatch { scores: usize, reaches: usize },
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("cue file line {line}: {reason}")]
    MalformedCues { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Support,
    Doubt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceCue {
    pub term: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StanceLabel {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialIndicators {
    pub reach: u64,
    pub posting_count: u64,
    pub stance_score: f64,
    pub stance_label: StanceLabel,
}

impl SocialIndicators {
    pub fn empty() -> Self {
        SocialIndicators {
            reach: 0,
            posting_count: 0,
            stance_score: 0.0,
            stance_label: StanceLabel::Neutral,
        }
    }
}

/// Parses `term<TAB>support|doubt` lines. Terms are folded to lowercase; a
/// repeated term keeps its last polarity.
pub fn parse_cues(source: &str) -> Result<Vec<StanceCue>, SocialError> {
    let mut by_term = BTreeMap::new();
    for (idx, line) in source.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let malformed = |reason: &str| SocialError::MalformedCues {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let (term, polarity) = trimmed.split_once('\t').ok_or_else(|| malformed("missing tab"))?;
        let polarity = match polarity.trim() {
            "support" => Polarity::Support,
            "doubt" => Polarity::Doubt,
            _ => return Err(malformed("polarity must be support or doubt")),
        };
        let term = fold(term.trim());
        if term.is_empty() {
            return Err(malformed("empty term"));
        }
        by_term.insert(term, polarity);
    }
    Ok(by_term
        .into_iter()
        .map(|(term, polarity)| StanceCue { term, polarity })
        .collect())
}

pub fn bundled_cues() -> Vec<StanceCue> {
    parse_cues(BUNDLED_CUES).expect("bundled cue file is well formed")
}

/// Sum of shares, likes and replies; absent or negative counts add nothing.
pub fn compute_reach(postings: &[RawPosting]) -> u64 {
    let c = |v: Option<i64>| v.unwrap_or(0).max(0) as u64;
    postings
        .iter()
        .map(|p| c(p.reactions.shares) + c(p.reactions.likes) + c(p.reactions.replies))
        .sum()
}

/// Each cue counts at most once per text.
pub fn stance_of_posting(text: &str, cues: &[StanceCue]) -> f64 {
    let folded = fold(text);
    let (mut s, mut d) = (0u32, 0u32);
    for cue in cues {
        if contains_phrase(&folded, &cue.term) {
            match cue.polarity {
                Polarity::Support => s += 1,
                Polarity::Doubt => d += 1,
            }
        }
    }
    if s + d == 0 {
        0.0
    } else {
        (f64::from(s) - f64::from(d)) / f64::from(s + d)
    }
}

pub fn stance_label(score: f64, tau: f64) -> StanceLabel {
    if score > tau {
        StanceLabel::Positive
    } else if score < -tau {
        StanceLabel::Negative
    } else {
        StanceLabel::Neutral
    }
}

/// Reach-weighted mean with weights `1 + reach`.
pub fn aggregate_stance(
    scores: &[f64],
    reaches: &[u64],
    tau: f64,
) -> Result<(f64, StanceLabel), SocialError> {
    if scores.len() != reaches.len() {
        return Err(SocialError::LengthMismatch {
            scores: scores.len(),
            reaches: reaches.len(),
        });
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SocialError::InvalidThreshold(tau));
    }
    if scores.is_empty() {
        return Ok((0.0, StanceLabel::Neutral));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&s, &r) in scores.iter().zip(reaches) {
        let w = 1.0 + r as f64;
        num += w * s;
        den += w;
    }
    let score = (num / den).clamp(-1.0, 1.0);
    Ok((score, stance_label(score, tau)))
}

/// Pluggable posting-level stance scorer returning a value in [-1, 1].
pub trait StanceModel: Send + Sync {
    fn score(&self, text: &str) -> f64;
}

#[derive(Debug, Clone)]
pub struct LexiconStance {
    cues: Vec<StanceCue>,
}

impl LexiconStance {
    pub fn new(cues: Vec<StanceCue>) -> Self {
        LexiconStance { cues }
    }
}

impl Default for LexiconStance {
    fn default() -> Self {
        LexiconStance::new(bundled_cues())
    }
}

impl StanceModel for LexiconStance {
    fn score(&self, text: &str) -> f64 {
        stance_of_posting(text, &self.cues)
    }
}

#[derive(Clone)]
pub struct SocialAnalyzer {
    model: Arc<dyn StanceModel>,
    tau: f64,
}

impl std::fmt::Debug for SocialAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SocialAnalyzer").field("tau", &self.tau).finish_non_exhaustive()
    }
}

impl Default for SocialAnalyzer {
    fn default() -> Self {
        SocialAnalyzer {
            model: Arc::new(LexiconStance::default()),
            tau: DEFAULT_TAU,
        }
    }
}

impl SocialAnalyzer {
    pub fn new(model: Arc<dyn StanceModel>, tau: f64) -> Result<Self, SocialError> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(SocialError::InvalidThreshold(tau));
        }
        Ok(SocialAnalyzer { model, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Rolls up the postings of one article.
    pub fn analyze(&self, postings: &[Posting]) -> SocialIndicators {
        let reaches: Vec<u64> = postings.iter().map(|p| p.reactions.total()).collect();
        let scores: Vec<f64> = postings.iter().map(|p| self.model.score(&p.text)).collect();
        let (stance_score, stance_label) =
            aggregate_stance(&scores, &reaches, self.tau).expect("lengths match and tau validated");
        SocialIndicators {
            reach: reaches.iter().sum(),
            posting_count: postings.len() as u64,
            stance_score,
            stance_label,
        }
    }
}
