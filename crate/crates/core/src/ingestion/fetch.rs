use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::redirect::Policy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_REDIRECTS: usize = 5;

/// Any of these marks the article as unevaluatable.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum FetchError {
    #[error("timed out")]
    Timeout,
    #[error("more than {MAX_REDIRECTS} redirects")]
    TooManyRedirects,
    #[error("transport error: {0}")]
    TransportError(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResponse {
    pub status: u16,
    pub body: Vec<u8>,
    /// URL after redirects.
    pub final_url: String,
}

impl FetchResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &str, timeout: Duration) -> Result<FetchResponse, FetchError>;
}

/// Blocking HTTP fetcher. Must not be driven from inside an async task.
#[derive(Debug, Clone)]
pub struct HttpFetcher {
    client: Client,
}

impl HttpFetcher {
    pub fn new() -> Result<Self, FetchError> {
        let client = Client::builder()
            .redirect(Policy::limited(MAX_REDIRECTS))
            .user_agent(concat!("newsgauge/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| FetchError::TransportError(e.to_string()))?;
        Ok(HttpFetcher { client })
    }
}

fn classify(err: reqwest::Error) -> FetchError {
    if err.is_timeout() {
        FetchError::Timeout
    } else if err.is_redirect() {
        FetchError::TooManyRedirects
    } else {
        FetchError::TransportError(err.to_string())
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &str, timeout: Duration) -> Result<FetchResponse, FetchError> {
        if timeout.is_zero() {
            return Err(FetchError::TransportError("timeout must be positive".into()));
        }
        let response = self
            .client
            .get(url)
            .timeout(timeout)
            .send()
            .map_err(classify)?;
        let status = response.status().as_u16();
        let final_url = response.url().to_string();
        let body = response.bytes().map_err(classify)?.to_vec();
        Ok(FetchResponse {
            status,
            body,
            final_url,
        })
    }
}

/// Serves fixed pages from memory, keyed by normalized URL; anything else is
/// a 404. Counts calls so callers can check fetch deduplication.
#[derive(Debug, Default)]
pub struct StaticFetcher {
    pages: BTreeMap<String, Vec<u8>>,
    calls: AtomicUsize,
}

impl StaticFetcher {
    pub fn new(pages: BTreeMap<String, Vec<u8>>) -> Self {
        let pages = pages
            .into_iter()
            .map(|(url, body)| (super::normalize_url(&url).unwrap_or(url), body))
            .collect();
        StaticFetcher {
            pages,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Fetcher for StaticFetcher {
    fn fetch(&self, url: &str, _timeout: Duration) -> Result<FetchResponse, FetchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = super::normalize_url(url).map_err(|e| FetchError::TransportError(e.to_string()))?;
        Ok(match self.pages.get(&key) {
            Some(body) => FetchResponse {
                status: 200,
                body: body.clone(),
                final_url: key,
            },
            None => FetchResponse {
                status: 404,
                body: Vec::new(),
                final_url: key,
            },
        })
    }
}

pub fn fetch_article(url: &str, timeout: Duration) -> Result<FetchResponse, FetchError> {
    HttpFetcher::new()?.fetch(url, timeout)
}
