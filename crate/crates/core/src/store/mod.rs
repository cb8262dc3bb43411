//! Hot operational store and the date-partitioned archive behind it.
//!
//! The hot store is reached only through [`KvStore`]: point reads, prefix
//! scans and serializable read-write transactions over string keys. The
//! bundled implementation is an embedded `redb` database, on disk or in memory.
//!
//! Key layout (values are compact JSON unless noted):
//!
//! - `posting/{post_id}`
//! - `posting_by_article/{article_id}/{post_id}` (empty value, index)
//! - `article/{article_id}`
//! - `seen/{article_id}` (empty value, set once an article URL was enqueued)
//! - `queue/{article_id}` (normalized URL awaiting fetch)
//! - `recompute/{article_id}` (empty value, indicator recomputation pending)
//! - `indicators/{article_id}`
//! - `review/{article_id}/{expert_id}`
//! - `fetch_failed/{article_id}`
//! - `archived/{record key}` (archive location of a migrated record)
//! - `meta/migration_epoch`

pub mod archive;
mod redb_store;

pub use archive::{Archive, ArchivePartition, MigrationReport, RecordKind};
pub use redb_store::RedbStore;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod keys {
    pub const POSTING: &str = "posting/";
    pub const POSTING_BY_ARTICLE: &str = "posting_by_article/";
    pub const ARTICLE: &str = "article/";
    pub const SEEN: &str = "seen/";
    pub const QUEUE: &str = "queue/";
    pub const RECOMPUTE: &str = "recompute/";
    pub const INDICATORS: &str = "indicators/";
    pub const REVIEW: &str = "review/";
    pub const FETCH_FAILED: &str = "fetch_failed/";
    pub const ARCHIVED: &str = "archived/";
    pub const MIGRATION_EPOCH: &str = "meta/migration_epoch";

    pub fn posting(post_id: &str) -> String {
        format!("{POSTING}{post_id}")
    }

    pub fn posting_by_article(article_id: &str, post_id: &str) -> String {
        format!("{POSTING_BY_ARTICLE}{article_id}/{post_id}")
    }

    pub fn article(article_id: &str) -> String {
        format!("{ARTICLE}{article_id}")
    }

    pub fn review(article_id: &str, expert_id: &str) -> String {
        format!("{REVIEW}{article_id}/{expert_id}")
    }

    pub fn archived(record_key: &str) -> String {
        format!("{ARCHIVED}{record_key}")
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store unavailable: {0}")]
    Unavailable(String),
    #[error("corrupt record under {key}: {reason}")]
    Corrupt { key: String, reason: String },
    #[error("archive i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type KeyValue = (String, Vec<u8>);

/// Operations available inside a read-write transaction.
pub trait Txn {
    fn get(&self, key: &str) -> Result<Option<Vec<u8>>, StoreError>;
    fn put(&mut self, key: &str, value: &[u8]) -> Result<(), StoreError>;
    fn delete(&mut self, key: &str) -> Result<bool, StoreError>;
    fn scan_prefix(&self, prefix: &str) -> Result<Vec<KeyValue>, StoreError>;
}

/// Storage contract for the hot store. Transactions are serializable; an
/// `Err` returned from the closure rolls the transaction back.
pub trait KvStore: Send + Sync {
    fn get(&self, key: &str) -> Result<Option<Vec<u8>>, StoreError>;
    fn scan_prefix(&self, prefix: &str) -> Result<Vec<KeyValue>, StoreError>;
    fn transaction(
        &self,
        f: &mut dyn FnMut(&mut dyn Txn) -> Result<(), StoreError>,
    ) -> Result<(), StoreError>;

    fn put(&self, key: &str, value: &[u8]) -> Result<(), StoreError> {
        self.transaction(&mut |txn| txn.put(key, value))
    }

    fn delete(&self, key: &str) -> Result<bool, StoreError> {
        transact(self, |txn| txn.delete(key))
    }
}

/// Runs `f` in a transaction and hands back its result.
pub fn transact<S, T, F>(store: &S, mut f: F) -> Result<T, StoreError>
where
    S: KvStore + ?Sized,
    F: FnMut(&mut dyn Txn) -> Result<T, StoreError>,
{
    let mut out = None;
    store.transaction(&mut |txn| {
        out = Some(f(txn)?);
        Ok(())
    })?;
    Ok(out.expect("transaction closure ran"))
}

/// SHA-256 over every key/value pair in key order.
pub fn snapshot_digest(store: &dyn KvStore) -> Result<String, StoreError> {
    let mut hasher = Sha256::new();
    for (key, value) in store.scan_prefix("")? {
        hasher.update((key.len() as u64).to_le_bytes());
        hasher.update(key.as_bytes());
        hasher.update((value.len() as u64).to_le_bytes());
        hasher.update(&value);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub(crate) fn decode<T: serde::de::DeserializeOwned>(
    key: &str,
    bytes: &[u8],
) -> Result<T, StoreError> {
    serde_json::from_slice(bytes).map_err(|e| StoreError::Corrupt {
        key: key.to_string(),
        reason: e.to_string(),
    })
}

pub(crate) fn encode<T: serde::Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("domain records serialize")
}
