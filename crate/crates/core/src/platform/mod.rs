//! The assembled service: hot store, archive, assets and fetcher behind one
//! handle. All methods block; async callers should move them off the runtime.

mod queries;
mod report;

pub use report::{
    ApiError, ArticleSummary, Availability, ClassDensity, EvaluateFailure, FetchFailure, HealthReport,
    IndicatorReport, IngestSummary, KdeResponse, LineOutcome, LineStatus, PumpReport, StoredIndicators,
};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytics::AnalyticsError;
use crate::assets::Assets;
use crate::ingestion::{
    article_id, ingest_posting, normalize_url, Article, Fetcher, IngestError, Posting, RawPosting,
    UpsertStatus,
};
use crate::reviews::{
    self, aggregate_reviews, ExpertRegistry, ExpertReview, ReviewError, ReviewSubmission, SubmitOutcome,
};
use crate::segmentation::{assign_topics, Outlet};
use crate::store::archive::MigrationError;
use crate::store::{decode, encode, keys, snapshot_digest, transact, Archive, KvStore, MigrationReport, StoreError};

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformConfig {
    pub tau: f64,
    pub half_life_days: f64,
    pub report_ttl_secs: u64,
    pub fetch_timeout_secs: u64,
    pub migration_cutoff_days: i64,
    /// Leave articles without references out of the sci-ref-ratio density.
    pub exclude_zero_reference_articles: bool,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            tau: crate::social::DEFAULT_TAU,
            half_life_days: reviews::DEFAULT_HALF_LIFE_DAYS,
            report_ttl_secs: 15 * 60,
            fetch_timeout_secs: 10,
            migration_cutoff_days: 30,
            exclude_zero_reference_articles: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("unknown topic {0}")]
    UnknownTopic(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing or invalid expert token")]
    Unauthorized,
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error(transparent)]
    Evaluate(#[from] EvaluateFailure),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Migration(#[from] MigrationError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<IngestError> for PlatformError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Store(s) => PlatformError::Store(s),
            other => PlatformError::InvalidInput(other.to_string()),
        }
    }
}

impl PlatformError {
    pub fn code(&self) -> &'static str {
        match self {
            PlatformError::NotFound { .. } => "not_found",
            PlatformError::UnknownTopic(_) => "unknown_topic",
            PlatformError::InvalidInput(_) => "invalid_input",
            PlatformError::Unauthorized => "unauthorized",
            PlatformError::Forbidden(_) => "forbidden",
            PlatformError::Evaluate(EvaluateFailure::FetchFailed(_)) => "fetch_failed",
            PlatformError::Evaluate(EvaluateFailure::ParseFailed(_)) => "parse_failed",
            PlatformError::Review(ReviewError::UnknownArticle(_)) => "not_found",
            PlatformError::Review(ReviewError::InvalidScore(_)) => "invalid_score",
            PlatformError::Review(ReviewError::UnknownExpert(_)) => "unknown_expert",
            PlatformError::Review(ReviewError::NoReviews) => "no_reviews",
            PlatformError::Review(ReviewError::InvalidHalfLife(_)) => "invalid_config",
            PlatformError::Review(ReviewError::Store(_)) => "store_unavailable",
            PlatformError::Analytics(AnalyticsError::UnknownClass(_)) => "unknown_class",
            PlatformError::Analytics(AnalyticsError::EmptyWindow { .. }) => "empty_window",
            PlatformError::Analytics(_) => "invalid_sample",
            PlatformError::Migration(MigrationError::InvalidCutoff(_)) => "invalid_cutoff",
            PlatformError::Migration(MigrationError::PartialMigration { .. }) => "partial_migration",
            PlatformError::Migration(MigrationError::Store(_)) => "store_unavailable",
            PlatformError::Store(_) => "store_unavailable",
        }
    }

    pub fn to_api_error(&self) -> ApiError {
        let detail = match self {
            PlatformError::NotFound { kind, id } => serde_json::json!({ "kind": kind, "id": id }),
            PlatformError::UnknownTopic(t) => serde_json::json!({ "topic": t }),
            PlatformError::Evaluate(f) => serde_json::to_value(f).expect("serializable"),
            PlatformError::Review(ReviewError::UnknownArticle(id)) => {
                serde_json::json!({ "kind": "article", "id": id })
            }
            PlatformError::Migration(MigrationError::PartialMigration { report, failures }) => {
                serde_json::json!({ "report": report, "failures": failures })
            }
            _ => serde_json::Value::Null,
        };
        ApiError {
            code: self.code().to_string(),
            message: self.to_string(),
            detail,
        }
    }
}

fn content_hash(article: &Article) -> String {
    let mut h = Sha256::new();
    h.update(article.title.as_bytes());
    h.update([0]);
    h.update(article.body.as_bytes());
    hex::encode(h.finalize())
}

type CachedEvaluation = (DateTime<Utc>, Result<IndicatorReport, EvaluateFailure>);

pub struct Platform {
    store: Arc<dyn KvStore>,
    archive: Arc<Archive>,
    assets: Assets,
    config: PlatformConfig,
    fetcher: Arc<dyn Fetcher>,
    clock: Clock,
    experts: ExpertRegistry,
    cache: Mutex<HashMap<String, CachedEvaluation>>,
    evaluating: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform")
            .field("archive", &self.archive.root())
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Platform {
    pub fn new(
        store: Arc<dyn KvStore>,
        archive: Archive,
        assets: Assets,
        config: PlatformConfig,
        fetcher: Arc<dyn Fetcher>,
    ) -> Self {
        Platform {
            store,
            archive: Arc::new(archive),
            assets,
            config,
            fetcher,
            clock: system_clock(),
            experts: ExpertRegistry::default(),
            cache: Mutex::new(HashMap::new()),
            evaluating: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_experts(mut self, experts: ExpertRegistry) -> Self {
        self.experts = experts;
        self
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    pub fn store(&self) -> &dyn KvStore {
        self.store.as_ref()
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn assets(&self) -> &Assets {
        &self.assets
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn experts(&self) -> &ExpertRegistry {
        &self.experts
    }

    /// Ingests newline-delimited postings. Blank lines are skipped; invalid
    /// lines are reported and leave the store untouched.
    pub fn ingest_ndjson(&self, body: &str) -> Result<Vec<LineOutcome>, PlatformError> {
        let mut out = Vec::new();
        for (idx, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let result = RawPosting::from_line(line)
                .and_then(|raw| ingest_posting(self.store(), Some(&self.archive), &raw));
            let outcome = match result {
                Ok(o) => LineOutcome {
                    line: idx + 1,
                    outcome: match o.status {
                        UpsertStatus::StoredNew => LineStatus::StoredNew,
                        UpsertStatus::Updated => LineStatus::Updated,
                    },
                    article_enqueued: o.article_enqueued,
                    error: None,
                },
                Err(IngestError::Store(e)) => return Err(e.into()),
                Err(e) => LineOutcome {
                    line: idx + 1,
                    outcome: LineStatus::Rejected,
                    article_enqueued: false,
                    error: Some(e.to_string()),
                },
            };
            out.push(outcome);
        }
        Ok(out)
    }

    fn read_record(&self, key: &str) -> Result<Option<Vec<u8>>, StoreError> {
        match self.store.get(key)? {
            Some(v) => Ok(Some(v)),
            None => self.archive.read_record(self.store(), key),
        }
    }

    pub fn load_article(&self, article_id: &str) -> Result<Option<Article>, StoreError> {
        let key = keys::article(article_id);
        self.read_record(&key)?.map(|b| decode(&key, &b)).transpose()
    }

    /// Postings linking to the article, hot or archived, in post_id order.
    pub fn postings_for(&self, article_id: &str) -> Result<Vec<Posting>, StoreError> {
        let prefix = format!("{}{article_id}/", keys::POSTING_BY_ARTICLE);
        let mut out = Vec::new();
        for (index_key, _) in self.store.scan_prefix(&prefix)? {
            let post_id = &index_key[prefix.len()..];
            let key = keys::posting(post_id);
            if let Some(bytes) = self.read_record(&key)? {
                out.push(decode(&key, &bytes)?);
            }
        }
        Ok(out)
    }

    /// Stores the article; recomputation is scheduled when its title or body
    /// changed. Identical bytes are a no-op reported as `Updated`.
    pub fn upsert_article(&self, article: &Article) -> Result<UpsertStatus, PlatformError> {
        let key = keys::article(&article.article_id);
        let archived_key = keys::archived(&key);
        let bytes = encode(article);
        let archived_copy = self.archive.read_record(self.store(), &key)?;
        let aid = article.article_id.clone();
        let new_hash = content_hash(article);
        let status = transact(self.store(), |txn| {
            let archived_live = txn.get(&archived_key)?.is_some();
            let current = match txn.get(&key)? {
                Some(b) => Some(b),
                None if archived_live => archived_copy.clone(),
                None => None,
            };
            let status = if current.is_some() {
                UpsertStatus::Updated
            } else {
                UpsertStatus::StoredNew
            };
            txn.delete(&format!("{}{aid}", keys::QUEUE))?;
            txn.delete(&format!("{}{aid}", keys::FETCH_FAILED))?;
            if current.as_deref() == Some(bytes.as_slice()) {
                return Ok(status);
            }
            let changed = match &current {
                None => true,
                Some(cur) => content_hash(&decode::<Article>(&key, cur)?) != new_hash,
            };
            txn.put(&key, &bytes)?;
            if archived_live {
                txn.delete(&archived_key)?;
            }
            if changed {
                txn.put(&format!("{}{aid}", keys::RECOMPUTE), b"")?;
            }
            Ok(status)
        })?;
        Ok(status)
    }

    fn fetch_and_parse(&self, url: &str) -> Result<Article, EvaluateFailure> {
        let timeout = Duration::from_secs(self.config.fetch_timeout_secs.max(1));
        let resp = self
            .fetcher
            .fetch(url, timeout)
            .map_err(|e| EvaluateFailure::FetchFailed(e.to_string()))?;
        if !resp.is_success() {
            return Err(EvaluateFailure::FetchFailed(format!("http status {}", resp.status)));
        }
        let mut article = self
            .assets
            .parser
            .parse(&resp.body, &resp.final_url, self.now())
            .map_err(|e| EvaluateFailure::ParseFailed(e.to_string()))?;
        // identity stays with the URL that was shared, not where it redirected
        article.url = url.to_string();
        article.article_id = article_id(url);
        Ok(article)
    }

    /// Fetches every queued article once. Failures are recorded, not retried.
    pub fn process_queue(&self) -> Result<PumpReport, PlatformError> {
        let mut report = PumpReport::default();
        for (key, url) in self.store.scan_prefix(keys::QUEUE)? {
            let aid = key[keys::QUEUE.len()..].to_string();
            let url = String::from_utf8_lossy(&url).into_owned();
            match self.fetch_and_parse(&url) {
                Ok(article) => {
                    self.upsert_article(&article)?;
                    report.fetched += 1;
                }
                Err(failure) => {
                    tracing::warn!(%url, %failure, "article not evaluable");
                    let record = encode(&FetchFailure {
                        url: url.clone(),
                        failure,
                        at: self.now(),
                    });
                    transact(self.store(), |txn| {
                        txn.put(&format!("{}{aid}", keys::FETCH_FAILED), &record)?;
                        txn.delete(&key)?;
                        Ok(())
                    })?;
                    report.failed += 1;
                }
            }
        }
        Ok(report)
    }

    pub fn compute_indicators(&self, article: &Article) -> StoredIndicators {
        StoredIndicators {
            article_id: article.article_id.clone(),
            outlet_domain: article.outlet_domain.clone(),
            content_hash: content_hash(article),
            topics: assign_topics(article, &self.assets.taxonomy),
            content: Availability::from_result(self.assets.content.analyze(article)),
            context: self.assets.classifier.context_indicators(article),
        }
    }

    fn recompute_one(&self, article_id: &str) -> Result<(), PlatformError> {
        let marker = format!("{}{article_id}", keys::RECOMPUTE);
        let indicators = self.load_article(article_id)?.map(|a| encode(&self.compute_indicators(&a)));
        let ind_key = format!("{}{article_id}", keys::INDICATORS);
        transact(self.store(), |txn| {
            if let Some(bytes) = &indicators {
                txn.put(&ind_key, bytes)?;
            }
            txn.delete(&marker)?;
            Ok(())
        })?;
        Ok(())
    }

    /// Drains the recomputation markers.
    pub fn run_recomputations(&self) -> Result<usize, PlatformError> {
        let pending = self.store.scan_prefix(keys::RECOMPUTE)?;
        for (key, _) in &pending {
            self.recompute_one(&key[keys::RECOMPUTE.len()..])?;
        }
        Ok(pending.len())
    }

    /// Fetch queue, then recomputation.
    pub fn pump(&self) -> Result<PumpReport, PlatformError> {
        let mut report = self.process_queue()?;
        report.recomputed = self.run_recomputations()?;
        Ok(report)
    }

    pub fn stored_indicators(&self, article_id: &str) -> Result<Option<StoredIndicators>, StoreError> {
        let key = format!("{}{article_id}", keys::INDICATORS);
        self.store.get(&key)?.map(|b| decode(&key, &b)).transpose()
    }

    pub fn article_report(&self, article_id: &str) -> Result<IndicatorReport, PlatformError> {
        let article = self.load_article(article_id)?.ok_or_else(|| PlatformError::NotFound {
            kind: "article",
            id: article_id.to_string(),
        })?;
        let indicators = match self.stored_indicators(article_id)? {
            Some(s) if s.content_hash == content_hash(&article) => s,
            _ => self.compute_indicators(&article),
        };
        let postings = self.postings_for(article_id)?;
        let social = self.assets.social.analyze(&postings);
        let now = self.now();
        let reviews = reviews::list_reviews(self.store(), article_id)?;
        let reviews = if reviews.is_empty() {
            Availability::Unavailable {
                reason: "no reviews yet".into(),
            }
        } else {
            Availability::from_result(aggregate_reviews(&reviews, now, self.config.half_life_days))
        };
        Ok(IndicatorReport {
            article: ArticleSummary {
                article_id: article.article_id.clone(),
                url: article.url.clone(),
                rating_class: self.assets.outlets.class_of(&article.outlet_domain),
                outlet: article.outlet_domain,
                title: article.title,
                byline: article.byline,
                published_at: article.published_at,
                topics: indicators.topics,
            },
            content: indicators.content,
            context: Availability::Available {
                value: indicators.context,
            },
            social: Availability::Available { value: social },
            reviews,
            computed_at: now,
        })
    }

    fn evaluation_lock(&self, article_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.evaluating.lock().expect("lock not poisoned");
        locks.entry(article_id.to_string()).or_default().clone()
    }

    /// Fetches, parses and reports on `url`. Results, failures included, are
    /// cached per article for the configured TTL; concurrent calls for the
    /// same article wait for one fetch.
    pub fn evaluate_url(&self, url: &str) -> Result<IndicatorReport, PlatformError> {
        let normalized = normalize_url(url).map_err(|e| PlatformError::InvalidInput(e.to_string()))?;
        let aid = article_id(&normalized);
        let lock = self.evaluation_lock(&aid);
        let _guard = lock.lock().expect("lock not poisoned");

        let ttl = chrono::Duration::seconds(self.config.report_ttl_secs as i64);
        let now = self.now();
        if let Some((at, cached)) = self.cache.lock().expect("lock not poisoned").get(&aid) {
            if now - *at < ttl {
                return cached.clone().map_err(PlatformError::from);
            }
        }
        let result = match self.fetch_and_parse(&normalized) {
            Ok(article) => {
                self.upsert_article(&article)?;
                self.recompute_one(&aid)?;
                Ok(self.article_report(&aid)?)
            }
            Err(f) => Err(f),
        };
        self.cache
            .lock()
            .expect("lock not poisoned")
            .insert(aid, (now, result.clone()));
        result.map_err(PlatformError::from)
    }

    fn invalidate(&self, article_id: &str) {
        self.cache.lock().expect("lock not poisoned").remove(article_id);
    }

    /// `expert` is the identity the caller authenticated as.
    pub fn submit_review(
        &self,
        article_id: &str,
        expert: &str,
        submission: ReviewSubmission,
    ) -> Result<SubmitOutcome, PlatformError> {
        if submission.expert_id != expert {
            return Err(PlatformError::Forbidden(format!(
                "token belongs to {expert}, review is for {}",
                submission.expert_id
            )));
        }
        let review = submission.into_review(article_id, self.now())?;
        let outcome = reviews::submit_review(self.store(), &self.experts, &review)?;
        self.invalidate(article_id);
        Ok(outcome)
    }

    pub fn list_reviews(&self, article_id: &str) -> Result<Vec<ExpertReview>, PlatformError> {
        if self.load_article(article_id)?.is_none() {
            return Err(PlatformError::NotFound {
                kind: "article",
                id: article_id.to_string(),
            });
        }
        Ok(reviews::list_reviews(self.store(), article_id)?)
    }

    pub fn authenticate(&self, token: &str) -> Result<String, PlatformError> {
        self.experts
            .authenticate(token)
            .map(str::to_string)
            .ok_or(PlatformError::Unauthorized)
    }

    pub fn outlets(&self) -> Vec<Outlet> {
        self.assets.outlets.iter().cloned().collect()
    }

    pub fn migrate(&self, cutoff_days: i64) -> Result<MigrationReport, PlatformError> {
        Ok(self.archive.migrate(self.store(), self.now(), cutoff_days)?)
    }

    /// Digest over hot store contents and committed archive partitions.
    pub fn snapshot_digest(&self) -> Result<String, PlatformError> {
        let mut h = Sha256::new();
        h.update(snapshot_digest(self.store())?.as_bytes());
        h.update(self.archive.digest(self.store())?.as_bytes());
        Ok(hex::encode(h.finalize()))
    }

    pub fn health(&self) -> HealthReport {
        let (store, epoch) = match Archive::committed_epoch(self.store()) {
            Ok(e) => ("ok".to_string(), e),
            Err(e) => (e.to_string(), 0),
        };
        HealthReport {
            status: if store == "ok" { "ok".into() } else { "degraded".into() },
            store,
            archive_epoch: epoch,
            psl_version: self.assets.psl_version.clone(),
            topics: self.assets.taxonomy.nodes().count(),
            outlets: self.assets.outlets.len(),
        }
    }
}
