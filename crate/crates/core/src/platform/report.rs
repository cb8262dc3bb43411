use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::analytics::{DensityCurve, KdeMetric, KdeScale};
use crate::content::ContentIndicators;
use crate::references::ContextIndicators;
use crate::reviews::ReviewAggregate;
use crate::segmentation::RatingClass;
use crate::social::SocialIndicators;

/// An indicator family that is either computed or explains why not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Availability<T> {
    Available { value: T },
    Unavailable { reason: String },
}

impl<T> Availability<T> {
    pub fn from_result<E: std::fmt::Display>(r: Result<T, E>) -> Self {
        match r {
            Ok(value) => Availability::Available { value },
            Err(e) => Availability::Unavailable { reason: e.to_string() },
        }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Availability::Available { value } => Some(value),
            Availability::Unavailable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleSummary {
    pub article_id: String,
    pub url: String,
    pub outlet: String,
    pub title: String,
    pub byline: Option<String>,
    pub published_at: Option<DateTime<Utc>>,
    pub topics: BTreeSet<String>,
    pub rating_class: Option<RatingClass>,
}

/// Fused per-article view. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub article: ArticleSummary,
    pub content: Availability<ContentIndicators>,
    pub context: Availability<ContextIndicators>,
    pub social: Availability<SocialIndicators>,
    pub reviews: Availability<ReviewAggregate>,
    pub computed_at: DateTime<Utc>,
}

/// Indicators persisted by the recomputation step, keyed by article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredIndicators {
    pub article_id: String,
    pub outlet_domain: String,
    /// Hash of title and body the indicators were computed from.
    pub content_hash: String,
    pub topics: BTreeSet<String>,
    pub content: Availability<ContentIndicators>,
    pub context: ContextIndicators,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchFailure {
    pub url: String,
    pub failure: EvaluateFailure,
    pub at: DateTime<Utc>,
}

/// Why an article could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "code", content = "reason", rename_all = "snake_case")]
pub enum EvaluateFailure {
    #[error("fetch failed: {0}")]
    FetchFailed(String),
    #[error("parse failed: {0}")]
    ParseFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineStatus {
    StoredNew,
    Updated,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineOutcome {
    /// 1-based line number in the submitted body.
    pub line: usize,
    pub outcome: LineStatus,
    pub article_enqueued: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub lines: usize,
    pub stored_new: usize,
    pub updated: usize,
    pub rejected: usize,
    pub enqueued: usize,
}

impl IngestSummary {
    pub fn of(outcomes: &[LineOutcome]) -> Self {
        let mut s = IngestSummary {
            lines: outcomes.len(),
            ..IngestSummary::default()
        };
        for o in outcomes {
            match o.outcome {
                LineStatus::StoredNew => s.stored_new += 1,
                LineStatus::Updated => s.updated += 1,
                LineStatus::Rejected => s.rejected += 1,
            }
            s.enqueued += usize::from(o.article_enqueued);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PumpReport {
    pub fetched: usize,
    pub failed: usize,
    pub recomputed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDensity {
    pub rating_class: RatingClass,
    pub n: usize,
    pub curve: Availability<DensityCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeResponse {
    pub topic: String,
    pub metric: KdeMetric,
    pub scale: KdeScale,
    pub curves: Vec<ClassDensity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthReport {
    pub status: String,
    pub store: String,
    pub archive_epoch: u64,
    pub psl_version: String,
    pub topics: usize,
    pub outlets: usize,
}

/// Error body shared by the HTTP API and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub detail: serde_json::Value,
}
