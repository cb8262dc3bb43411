//! Reference-context indicators: every outbound link in an article body is
//! classified as internal, external or scientific.

mod psl;

pub use psl::SuffixList;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::ingestion::{Article, ReferenceLink};

const BUNDLED_SCI: &str = include_str!("../../assets/sci_domains.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReferenceError {
    #[error("invalid host: {0:?}")]
    InvalidHost(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceClass {
    Internal,
    External,
    Scientific,
}

/// Scientific reference targets: registrable domains (matched on the host and
/// any of its parent domains) plus label-suffix patterns such as `.edu` or `.ac.*`.
#[derive(Debug, Clone, Default)]
pub struct SciDomains {
    domains: BTreeSet<String>,
    patterns: Vec<Vec<String>>,
}

impl SciDomains {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SCI)
    }

    pub fn parse(source: &str) -> Self {
        let mut out = SciDomains::default();
        for line in source.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let entry = line.to_ascii_lowercase();
            if let Some(pattern) = entry.strip_prefix('.') {
                out.patterns
                    .push(pattern.split('.').map(str::to_string).collect());
            } else {
                out.domains.insert(entry);
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty() && self.patterns.is_empty()
    }

    pub fn matches(&self, host: &str) -> bool {
        let host = host.trim_end_matches('.').to_ascii_lowercase();
        let labels: Vec<&str> = host.split('.').collect();
        for i in 0..labels.len() {
            if self.domains.contains(&labels[i..].join(".")) {
                return true;
            }
        }
        self.patterns.iter().any(|pattern| {
            labels.len() > pattern.len()
                && labels[labels.len() - pattern.len()..]
                    .iter()
                    .zip(pattern)
                    .all(|(label, pat)| pat == "*" || pat == label)
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceClassifier {
    suffixes: SuffixList,
    sci: SciDomains,
}

impl Default for ReferenceClassifier {
    fn default() -> Self {
        Self::new(SuffixList::bundled(), SciDomains::bundled())
    }
}

impl ReferenceClassifier {
    pub fn new(suffixes: SuffixList, sci: SciDomains) -> Self {
        ReferenceClassifier { suffixes, sci }
    }

    pub fn suffixes(&self) -> &SuffixList {
        &self.suffixes
    }

    pub fn sci_domains(&self) -> &SciDomains {
        &self.sci
    }

    pub fn registrable_domain(&self, host: &str) -> Result<String, ReferenceError> {
        self.suffixes.registrable_domain(host)
    }

    /// Precedence is Internal > Scientific > External, so an outlet that is
    /// itself on the scientific list still gets its self-links counted as internal.
    pub fn classify(
        &self,
        article_domain: &str,
        reference: &ReferenceLink,
    ) -> Result<ReferenceClass, ReferenceError> {
        let url = Url::parse(&reference.href)
            .map_err(|_| ReferenceError::InvalidHost(reference.href.clone()))?;
        let host = url
            .host_str()
            .ok_or_else(|| ReferenceError::InvalidHost(reference.href.clone()))?;
        let domain = self.registrable_domain(host)?;
        if domain == article_domain.to_ascii_lowercase() {
            Ok(ReferenceClass::Internal)
        } else if self.sci.matches(host) {
            Ok(ReferenceClass::Scientific)
        } else {
            Ok(ReferenceClass::External)
        }
    }

    pub fn context_indicators(&self, article: &Article) -> ContextIndicators {
        let mut counts = ReferenceCounts::default();
        for reference in &article.references {
            let class = self
                .classify(&article.outlet_domain, reference)
                .unwrap_or_else(|err| {
                    tracing::warn!(href = %reference.href, %err, "unclassifiable reference counted as external");
                    ReferenceClass::External
                });
            counts.add(class);
        }
        ContextIndicators::from_counts(counts)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceCounts {
    pub internal: u64,
    pub external: u64,
    pub scientific: u64,
}

impl ReferenceCounts {
    pub fn add(&mut self, class: ReferenceClass) {
        match class {
            ReferenceClass::Internal => self.internal += 1,
            ReferenceClass::External => self.external += 1,
            ReferenceClass::Scientific => self.scientific += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.internal + self.external + self.scientific
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextIndicators {
    pub counts: ReferenceCounts,
    pub sci_ref_ratio: f64,
    pub has_references: bool,
}

impl ContextIndicators {
    pub fn from_counts(counts: ReferenceCounts) -> Self {
        ContextIndicators {
            counts,
            sci_ref_ratio: sci_ref_ratio(&counts),
            has_references: counts.total() > 0,
        }
    }
}

/// Scientific share of all references, internal ones included. Zero when the
/// article has no references.
pub fn sci_ref_ratio(counts: &ReferenceCounts) -> f64 {
    match counts.total() {
        0 => 0.0,
        total => counts.scientific as f64 / total as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(href: &str) -> ReferenceLink {
        ReferenceLink {
            href: href.to_string(),
            anchor_text: String::new(),
            position: 0,
        }
    }

    fn article(domain: &str, refs: &[&str]) -> Article {
        Article {
            article_id: "id".into(),
            url: format!("https://{domain}/story"),
            outlet_domain: domain.into(),
            title: "t".into(),
            body: "b".into(),
            byline: None,
            published_at: None,
            references: refs.iter().map(|r| link(r)).collect(),
            fetched_at: chrono::DateTime::UNIX_EPOCH,
        }
    }

    #[test]
    fn classify_examples() {
        let c = ReferenceClassifier::default();
        assert_eq!(
            c.classify("outlet.com", &link("https://outlet.com/also-read")).unwrap(),
            ReferenceClass::Internal
        );
        assert_eq!(
            c.classify("outlet.com", &link("https://www.nature.com/articles/x")).unwrap(),
            ReferenceClass::Scientific
        );
        assert_eq!(
            c.classify("outlet.com", &link("https://localpaper.org/story")).unwrap(),
            ReferenceClass::External
        );
    }

    #[test]
    fn suffix_patterns() {
        let c = ReferenceClassifier::default();
        assert_eq!(
            c.classify("outlet.com", &link("https://news.mit.edu/x")).unwrap(),
            ReferenceClass::Scientific
        );
        assert_eq!(
            c.classify("outlet.com", &link("https://www.ox.ac.uk/news")).unwrap(),
            ReferenceClass::Scientific
        );
        // "ac" must sit right under the final label
        assert_eq!(
            c.classify("outlet.com", &link("https://ac.example.com/")).unwrap(),
            ReferenceClass::External
        );
    }

    #[test]
    fn internal_beats_scientific() {
        let c = ReferenceClassifier::default();
        assert_eq!(
            c.classify("nature.com", &link("https://blogs.nature.com/x")).unwrap(),
            ReferenceClass::Internal
        );
    }

    #[test]
    fn invalid_host_is_reported() {
        let c = ReferenceClassifier::default();
        assert!(c.classify("outlet.com", &link("mailto:a@b.c")).is_err());
        assert!(c.classify("outlet.com", &link("not a url")).is_err());
    }

    #[test]
    fn context_examples() {
        let c = ReferenceClassifier::default();
        let a = article(
            "outlet.com",
            &[
                "https://outlet.com/a",
                "https://arxiv.org/abs/1",
                "https://localpaper.org/b",
                "https://www.nejm.org/doi/x",
            ],
        );
        let ctx = c.context_indicators(&a);
        assert_eq!(
            ctx.counts,
            ReferenceCounts {
                internal: 1,
                external: 1,
                scientific: 2
            }
        );
        assert_eq!(ctx.sci_ref_ratio, 0.5);

        let empty = c.context_indicators(&article("outlet.com", &[]));
        assert_eq!(empty.sci_ref_ratio, 0.0);
        assert!(!empty.has_references);

        let one = c.context_indicators(&article("outlet.com", &["https://arxiv.org/abs/2"]));
        assert_eq!(one.sci_ref_ratio, 1.0);
        assert!(one.has_references);
    }

    #[test]
    fn unclassifiable_counts_as_external() {
        let c = ReferenceClassifier::default();
        let ctx = c.context_indicators(&article("outlet.com", &["https://exa mple/x"]));
        assert_eq!(ctx.counts.external, 1);
    }

    #[test]
    fn empty_sci_list_never_scientific() {
        let c = ReferenceClassifier::new(SuffixList::bundled(), SciDomains::parse(""));
        assert_eq!(
            c.classify("outlet.com", &link("https://arxiv.org/abs/1")).unwrap(),
            ReferenceClass::External
        );
    }
}
