//! Posting intake, article fetching and parsing.
//!
//! Postings arrive as newline-delimited JSON (files or the push endpoint).
//! Each accepted posting is upserted by `post_id`; the article it links to is
//! queued for fetching the first time its normalized URL is seen.

pub mod fetch;
pub mod html;
pub mod url;

pub use self::fetch::{fetch_article, FetchError, FetchResponse, Fetcher, HttpFetcher, StaticFetcher};
pub use self::html::{parse_article_html, ArticleParser};
pub use self::url::{article_id, normalize_url};

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{encode, keys, transact, Archive, KvStore, StoreError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed url: {0:?}")]
    MalformedUrl(String),
    #[error("document has neither a title nor body text")]
    EmptyDocument,
    #[error("invalid posting: {0}")]
    InvalidPosting(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Reaction counts as they appear on the wire; absent counts are zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReactions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likes: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replies: Option<i64>,
}

/// One line of the ingest format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPosting {
    pub post_id: String,
    #[serde(default)]
    pub outlet_hint: String,
    pub url: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub reactions: RawReactions,
    pub posted_at: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reactions {
    pub shares: u64,
    pub likes: u64,
    pub replies: u64,
}

impl Reactions {
    pub fn total(&self) -> u64 {
        self.shares + self.likes + self.replies
    }
}

/// A validated posting as stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub post_id: String,
    pub outlet_hint: String,
    pub url: String,
    pub article_id: String,
    pub text: String,
    pub reactions: Reactions,
    pub posted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceLink {
    pub href: String,
    pub anchor_text: String,
    /// Byte offset into the article body where the anchor text starts.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub url: String,
    pub outlet_domain: String,
    pub title: String,
    pub body: String,
    pub byline: Option<String>,
    pub published_at: Option<DateTime<Utc>>,
    pub references: Vec<ReferenceLink>,
    pub fetched_at: DateTime<Utc>,
}

fn count(name: &str, value: Option<i64>) -> Result<u64, IngestError> {
    match value {
        None => Ok(0),
        Some(v) if v >= 0 => Ok(v as u64),
        Some(v) => Err(IngestError::InvalidPosting(format!("{name} count is negative ({v})"))),
    }
}

impl RawPosting {
    pub fn from_line(line: &str) -> Result<Self, IngestError> {
        serde_json::from_str(line).map_err(|e| IngestError::InvalidPosting(e.to_string()))
    }

    pub fn validate(&self) -> Result<Posting, IngestError> {
        let post_id = self.post_id.trim();
        if post_id.is_empty() {
            return Err(IngestError::InvalidPosting("post_id is empty".into()));
        }
        if post_id.chars().any(char::is_control) {
            return Err(IngestError::InvalidPosting("post_id contains control characters".into()));
        }
        let reactions = Reactions {
            shares: count("shares", self.reactions.shares)?,
            likes: count("likes", self.reactions.likes)?,
            replies: count("replies", self.reactions.replies)?,
        };
        let posted_at = DateTime::parse_from_rfc3339(self.posted_at.trim())
            .map_err(|e| IngestError::InvalidPosting(format!("posted_at: {e}")))?
            .with_timezone(&Utc)
            .with_nanosecond(0)
            .expect("zero nanoseconds is valid");
        let url = normalize_url(&self.url)
            .map_err(|_| IngestError::InvalidPosting(format!("url is not absolute: {:?}", self.url)))?;
        Ok(Posting {
            post_id: post_id.to_string(),
            outlet_hint: self.outlet_hint.clone(),
            article_id: article_id(&url),
            url,
            text: self.text.clone(),
            reactions,
            posted_at,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsertStatus {
    StoredNew,
    Updated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub status: UpsertStatus,
    pub article_enqueued: bool,
}

/// `true` when `candidate` should replace `current`: later `posted_at` wins,
/// ties go to the larger serialized record so the result is order-independent.
fn supersedes(candidate: &Posting, candidate_bytes: &[u8], current: &Posting, current_bytes: &[u8]) -> bool {
    (candidate.posted_at, candidate_bytes) > (current.posted_at, current_bytes)
}

/// Upserts one posting and enqueues its article on first sight.
pub fn ingest_posting(
    store: &dyn KvStore,
    archive: Option<&Archive>,
    raw: &RawPosting,
) -> Result<IngestOutcome, IngestError> {
    let posting = raw.validate()?;
    let bytes = encode(&posting);
    let key = keys::posting(&posting.post_id);
    let archived_key = keys::archived(&key);

    // archive partitions are immutable, so reading them outside the
    // transaction is safe; the index entry is re-checked inside it
    let archived_copy = match archive {
        Some(a) => a.read_record(store, &key)?,
        None => None,
    };

    let outcome = transact(store, |txn| {
        let hot = txn.get(&key)?;
        let archived_live = txn.get(&archived_key)?.is_some();
        let current = match hot {
            Some(b) => Some(b),
            None if archived_live => archived_copy.clone(),
            None => None,
        };
        let status = if current.is_some() {
            UpsertStatus::Updated
        } else {
            UpsertStatus::StoredNew
        };

        let replace = match &current {
            None => true,
            Some(cur_bytes) => {
                let cur: Posting = crate::store::decode(&key, cur_bytes)?;
                let replace = supersedes(&posting, &bytes, &cur, cur_bytes);
                if replace && cur.article_id != posting.article_id {
                    txn.delete(&keys::posting_by_article(&cur.article_id, &cur.post_id))?;
                }
                replace
            }
        };
        if replace {
            txn.put(&key, &bytes)?;
            if archived_live {
                txn.delete(&archived_key)?;
            }
            txn.put(&keys::posting_by_article(&posting.article_id, &posting.post_id), b"")?;
        }

        let aid = &posting.article_id;
        let seen_key = format!("{}{aid}", keys::SEEN);
        let known = txn.get(&seen_key)?.is_some()
            || txn.get(&keys::article(aid))?.is_some()
            || txn.get(&keys::archived(&keys::article(aid)))?.is_some();
        let article_enqueued = !known;
        if article_enqueued {
            txn.put(&seen_key, b"")?;
            txn.put(&format!("{}{aid}", keys::QUEUE), posting.url.as_bytes())?;
        }
        Ok(IngestOutcome {
            status,
            article_enqueued,
        })
    })?;
    Ok(outcome)
}
