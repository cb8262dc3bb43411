//! Expert reviews on seven Likert criteria and their time-decayed aggregate.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::store::{decode, encode, keys, transact, KvStore, StoreError};

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;
pub const DEFAULT_HALF_LIFE_DAYS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    FactualAccuracy,
    ScientificUnderstanding,
    LogicReasoning,
    PrecisionClarity,
    SourcesQuality,
    Fairness,
    Clickbaitness,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::FactualAccuracy,
        Criterion::ScientificUnderstanding,
        Criterion::LogicReasoning,
        Criterion::PrecisionClarity,
        Criterion::SourcesQuality,
        Criterion::Fairness,
        Criterion::Clickbaitness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::FactualAccuracy => "factual_accuracy",
            Criterion::ScientificUnderstanding => "scientific_understanding",
            Criterion::LogicReasoning => "logic_reasoning",
            Criterion::PrecisionClarity => "precision_clarity",
            Criterion::SourcesQuality => "sources_quality",
            Criterion::Fairness => "fairness",
            Criterion::Clickbaitness => "clickbaitness",
        }
    }

    pub fn parse(name: &str) -> Option<Criterion> {
        Criterion::ALL.into_iter().find(|c| c.as_str() == name)
    }
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown article {0}")]
    UnknownArticle(String),
    #[error("invalid score: {0}")]
    InvalidScore(String),
    #[error("unknown expert {0}")]
    UnknownExpert(String),
    #[error("no reviews to aggregate")]
    NoReviews,
    #[error("half-life must be positive and finite, got {0}")]
    InvalidHalfLife(f64),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Submission payload; criteria are validated into an [`ExpertReview`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSubmission {
    pub expert_id: String,
    pub scores: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertReview {
    pub review_id: String,
    pub article_id: String,
    pub expert_id: String,
    pub scores: BTreeMap<Criterion, u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
    pub created_at: DateTime<Utc>,
}

/// Checks that exactly the seven criteria are present, each in 1..=5.
pub fn validate_scores(raw: &BTreeMap<String, i64>) -> Result<BTreeMap<Criterion, u8>, ReviewError> {
    let mut scores = BTreeMap::new();
    for (name, &value) in raw {
        let criterion = Criterion::parse(name)
            .ok_or_else(|| ReviewError::InvalidScore(format!("unknown criterion {name:?}")))?;
        if !(i64::from(LIKERT_MIN)..=i64::from(LIKERT_MAX)).contains(&value) {
            return Err(ReviewError::InvalidScore(format!(
                "{name} = {value} is outside {LIKERT_MIN}..={LIKERT_MAX}"
            )));
        }
        scores.insert(criterion, value as u8);
    }
    if let Some(missing) = Criterion::ALL.iter().find(|c| !scores.contains_key(c)) {
        return Err(ReviewError::InvalidScore(format!("missing {}", missing.as_str())));
    }
    Ok(scores)
}

impl ReviewSubmission {
    pub fn into_review(self, article_id: &str, created_at: DateTime<Utc>) -> Result<ExpertReview, ReviewError> {
        let scores = validate_scores(&self.scores)?;
        let mut h = Sha256::new();
        h.update(article_id.as_bytes());
        h.update([0]);
        h.update(self.expert_id.as_bytes());
        h.update([0]);
        h.update(created_at.to_rfc3339().as_bytes());
        Ok(ExpertReview {
            review_id: hex::encode(&h.finalize()[..12]),
            article_id: article_id.to_string(),
            expert_id: self.expert_id,
            scores,
            free_text: self.free_text,
            created_at,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewAggregate {
    pub criteria: BTreeMap<Criterion, f64>,
    pub overall: f64,
    pub review_count: u64,
    pub as_of: DateTime<Utc>,
}

/// Per criterion, `Σ wᵢ·scoreᵢ / Σ wᵢ` with `wᵢ = 2^(−Δtᵢ/half_life)` and
/// `Δtᵢ` the review age in days, clamped at zero. Overall is the plain mean
/// of the criterion means.
pub fn aggregate_reviews(
    reviews: &[ExpertReview],
    now: DateTime<Utc>,
    half_life_days: f64,
) -> Result<ReviewAggregate, ReviewError> {
    if !(half_life_days > 0.0 && half_life_days.is_finite()) {
        return Err(ReviewError::InvalidHalfLife(half_life_days));
    }
    if reviews.is_empty() {
        return Err(ReviewError::NoReviews);
    }
    let weights: Vec<f64> = reviews
        .iter()
        .map(|r| {
            let age_days = (now - r.created_at).num_milliseconds() as f64 / 86_400_000.0;
            (-age_days.max(0.0) / half_life_days).exp2()
        })
        .collect();
    // exp2 underflows to zero for reviews many half-lives old; fall back to
    // equal weights rather than dividing by zero
    let total: f64 = weights.iter().sum();
    let weights = if total > 0.0 {
        weights
    } else {
        vec![1.0; reviews.len()]
    };
    let total: f64 = weights.iter().sum();

    let mut criteria = BTreeMap::new();
    for c in Criterion::ALL {
        let num: f64 = reviews
            .iter()
            .zip(&weights)
            .map(|(r, w)| w * f64::from(r.scores[&c]))
            .sum();
        criteria.insert(c, (num / total).clamp(f64::from(LIKERT_MIN), f64::from(LIKERT_MAX)));
    }
    let overall = criteria.values().sum::<f64>() / Criterion::ALL.len() as f64;
    Ok(ReviewAggregate {
        criteria,
        overall,
        review_count: reviews.len() as u64,
        as_of: now,
    })
}

/// Registered experts and their static API tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertRegistry {
    by_token: BTreeMap<String, String>,
    ids: BTreeSet<String>,
}

impl ExpertRegistry {
    pub fn new<I, S, T>(experts: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut reg = ExpertRegistry::default();
        for (id, token) in experts {
            let id = id.into();
            reg.by_token.insert(token.into(), id.clone());
            reg.ids.insert(id);
        }
        reg
    }

    pub fn is_registered(&self, expert_id: &str) -> bool {
        self.ids.contains(expert_id)
    }

    pub fn authenticate(&self, token: &str) -> Option<&str> {
        self.by_token.get(token).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub review_id: String,
    pub replaced: bool,
}

/// Stores the review, replacing any earlier one by the same expert.
pub fn submit_review(
    store: &dyn KvStore,
    experts: &ExpertRegistry,
    review: &ExpertReview,
) -> Result<SubmitOutcome, ReviewError> {
    if !experts.is_registered(&review.expert_id) {
        return Err(ReviewError::UnknownExpert(review.expert_id.clone()));
    }
    let article_key = keys::article(&review.article_id);
    let key = keys::review(&review.article_id, &review.expert_id);
    let bytes = encode(review);
    let outcome = transact(store, |txn| {
        let exists = txn.get(&article_key)?.is_some()
            || txn.get(&keys::archived(&article_key))?.is_some();
        if !exists {
            return Ok(None);
        }
        let replaced = txn.get(&key)?.is_some();
        txn.put(&key, &bytes)?;
        Ok(Some(replaced))
    })?;
    match outcome {
        None => Err(ReviewError::UnknownArticle(review.article_id.clone())),
        Some(replaced) => Ok(SubmitOutcome {
            review_id: review.review_id.clone(),
            replaced,
        }),
    }
}

/// Reviews for one article in expert order.
pub fn list_reviews(store: &dyn KvStore, article_id: &str) -> Result<Vec<ExpertReview>, ReviewError> {
    let prefix = format!("{}{article_id}/", keys::REVIEW);
    store
        .scan_prefix(&prefix)?
        .into_iter()
        .map(|(k, v)| decode(&k, &v).map_err(ReviewError::from))
        .collect()
}
