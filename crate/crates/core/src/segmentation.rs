//! Topic assignment over a keyword taxonomy and outlet rating classes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::Article;
use crate::references::SuffixList;
use crate::text::{count_phrase, fold};

const BUNDLED_TAXONOMY: &str = include_str!("../assets/taxonomy.json");

pub const DEFAULT_TOPIC_THRESHOLD: f64 = 3.0;
/// Title hits count this many times a body hit.
pub const TITLE_WEIGHT: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("malformed ranking: {0}")]
    MalformedRanking(String),
    #[error("no outlets to bucket")]
    EmptyOutletList,
    #[error("class boundaries must satisfy low_hi <= med_hi, got ({0}, {1})")]
    InvalidBoundaries(f64, f64),
    #[error("quantile bucketing supports 2 or 3 classes, got {0}")]
    UnsupportedClassCount(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicNode {
    pub topic_id: String,
    pub label: String,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_TOPIC_THRESHOLD
}

/// File form: nodes may name a `parent` or nest `children`.
#[derive(Debug, Deserialize)]
struct TopicEntry {
    topic_id: String,
    label: String,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default)]
    children: Vec<TopicEntry>,
}

#[derive(Debug, Deserialize)]
struct TaxonomyFile {
    topics: Vec<TopicEntry>,
}

fn flatten(entry: TopicEntry, parent: Option<String>, out: &mut Vec<TopicNode>) {
    let id = entry.topic_id.clone();
    out.push(TopicNode {
        topic_id: entry.topic_id,
        label: entry.label,
        parent: entry.parent.or(parent),
        keywords: entry.keywords,
        threshold: entry.threshold,
    });
    for child in entry.children {
        flatten(child, Some(id.clone()), out);
    }
}

/// A validated topic forest.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    nodes: BTreeMap<String, TopicNode>,
}

impl Taxonomy {
    pub fn bundled() -> Self {
        Taxonomy::from_json(BUNDLED_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn from_json(source: &str) -> Result<Self, SegmentationError> {
        let file: TaxonomyFile =
            serde_json::from_str(source).map_err(|e| SegmentationError::InvalidTaxonomy(e.to_string()))?;
        let mut nodes = Vec::new();
        for entry in file.topics {
            flatten(entry, None, &mut nodes);
        }
        Taxonomy::new(nodes)
    }

    /// Keywords are folded to lowercase. Rejects duplicate ids, dangling
    /// parents, cycles and leaves without keywords.
    pub fn new(nodes: Vec<TopicNode>) -> Result<Self, SegmentationError> {
        let invalid = |m: String| Err(SegmentationError::InvalidTaxonomy(m));
        let mut map = BTreeMap::new();
        for mut node in nodes {
            node.keywords = node
                .keywords
                .iter()
                .map(|k| fold(k.trim()))
                .filter(|k| !k.is_empty())
                .collect();
            if !(node.threshold > 0.0 && node.threshold.is_finite()) {
                return invalid(format!("{}: threshold must be positive", node.topic_id));
            }
            if map.contains_key(&node.topic_id) {
                return invalid(format!("duplicate topic {}", node.topic_id));
            }
            map.insert(node.topic_id.clone(), node);
        }
        for node in map.values() {
            if let Some(p) = &node.parent {
                if !map.contains_key(p) {
                    return invalid(format!("{}: unknown parent {p}", node.topic_id));
                }
            }
            let mut seen = BTreeSet::new();
            let mut cur = Some(node);
            while let Some(n) = cur {
                if !seen.insert(n.topic_id.as_str()) {
                    return invalid(format!("cycle through {}", node.topic_id));
                }
                cur = n.parent.as_ref().and_then(|p| map.get(p));
            }
        }
        let parents: BTreeSet<&str> = map.values().filter_map(|n| n.parent.as_deref()).collect();
        for node in map.values() {
            if !parents.contains(node.topic_id.as_str()) && node.keywords.is_empty() {
                return invalid(format!("leaf {} has no keywords", node.topic_id));
            }
        }
        Ok(Taxonomy { nodes: map })
    }

    pub fn get(&self, topic_id: &str) -> Option<&TopicNode> {
        self.nodes.get(topic_id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TopicNode> {
        self.nodes.values()
    }

    pub fn ancestors<'a>(&'a self, topic_id: &str) -> impl Iterator<Item = &'a str> + 'a {
        let mut cur = self.nodes.get(topic_id).and_then(|n| n.parent.as_deref());
        std::iter::from_fn(move || {
            let id = cur?;
            cur = self.nodes.get(id).and_then(|n| n.parent.as_deref());
            Some(id)
        })
    }
}

/// Score of one node: `3·title hits + body hits`, summed over its keywords.
pub fn topic_score(node: &TopicNode, title: &str, body: &str) -> f64 {
    folded_score(node, &fold(title), &fold(body))
}

fn folded_score(node: &TopicNode, title: &str, body: &str) -> f64 {
    node.keywords
        .iter()
        .map(|k| TITLE_WEIGHT * count_phrase(title, k) as f64 + count_phrase(body, k) as f64)
        .sum()
}

/// Topics whose score reaches their threshold, closed under ancestors.
pub fn assign_topics(article: &Article, taxonomy: &Taxonomy) -> BTreeSet<String> {
    let title = fold(&article.title);
    let body = fold(&article.body);
    let mut out = BTreeSet::new();
    for node in taxonomy.nodes() {
        if folded_score(node, &title, &body) >= node.threshold {
            out.insert(node.topic_id.clone());
            out.extend(taxonomy.ancestors(&node.topic_id).map(str::to_string));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingClass {
    Low,
    Medium,
    High,
}

impl RatingClass {
    pub const ALL: [RatingClass; 3] = [RatingClass::Low, RatingClass::Medium, RatingClass::High];

    pub fn as_str(self) -> &'static str {
        match self {
            RatingClass::Low => "low",
            RatingClass::Medium => "medium",
            RatingClass::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<RatingClass> {
        RatingClass::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlet {
    pub domain: String,
    pub name: String,
    pub quality_score: f64,
    /// Unset until bucketed.
    pub rating_class: Option<RatingClass>,
}

#[derive(Debug, Deserialize)]
struct RankingRow {
    domain: String,
    name: String,
    quality_score: String,
}

fn host_of(cell: &str) -> String {
    let cell = cell.trim();
    match url::Url::parse(cell) {
        Ok(u) if u.host_str().is_some() => u.host_str().unwrap_or_default().to_string(),
        _ => cell.split('/').next().unwrap_or_default().to_string(),
    }
}

/// Parses a `domain,name,quality_score` ranking. Domains are reduced to their
/// registrable form; a repeated domain keeps its first position and its last
/// row's values.
pub fn load_outlet_ranking(csv_bytes: &[u8], suffixes: &SuffixList) -> Result<Vec<Outlet>, SegmentationError> {
    let malformed = |m: String| SegmentationError::MalformedRanking(m);
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_bytes);
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["domain", "name", "quality_score"] {
        return Err(malformed(format!(
            "header must be domain,name,quality_score, got {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_domain: BTreeMap<String, Outlet> = BTreeMap::new();
    for (idx, row) in reader.deserialize::<RankingRow>().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| malformed(format!("line {line}: {e}")))?;
        let score: f64 = row
            .quality_score
            .parse()
            .map_err(|_| malformed(format!("line {line}: quality_score {:?} is not a number", row.quality_score)))?;
        if !score.is_finite() {
            return Err(malformed(format!("line {line}: quality_score must be finite")));
        }
        let domain = suffixes
            .registrable_domain(&host_of(&row.domain))
            .map_err(|e| malformed(format!("line {line}: {e}")))?;
        let outlet = Outlet {
            domain: domain.clone(),
            name: row.name,
            quality_score: score,
            rating_class: None,
        };
        if by_domain.insert(domain.clone(), outlet).is_some() {
            tracing::warn!(%domain, line, "duplicate outlet in ranking, last row wins");
        } else {
            order.push(domain);
        }
    }
    Ok(order
        .into_iter()
        .map(|d| by_domain.remove(&d).expect("every ordered domain was inserted"))
        .collect())
}

/// Classes by explicit score boundaries when given (`<= low_hi` is Low,
/// `<= med_hi` is Medium, above is High), otherwise by tertiles.
pub fn bucket_outlets(
    outlets: &[Outlet],
    boundaries: Option<(f64, f64)>,
) -> Result<Vec<Outlet>, SegmentationError> {
    if outlets.is_empty() {
        return Err(SegmentationError::EmptyOutletList);
    }
    match boundaries {
        Some((lo, med)) => {
            if lo.is_nan() || med.is_nan() || lo > med {
                return Err(SegmentationError::InvalidBoundaries(lo, med));
            }
            Ok(classify_by(outlets, &[lo, med], &[RatingClass::Low, RatingClass::Medium, RatingClass::High]))
        }
        None => bucket_outlets_quantile(outlets, 3),
    }
}

/// Empirical quantile split into `classes` groups (2: Low/High, 3:
/// Low/Medium/High). Cut values are order statistics, so outlets tied with a
/// cut fall into the lower class.
pub fn bucket_outlets_quantile(outlets: &[Outlet], classes: usize) -> Result<Vec<Outlet>, SegmentationError> {
    if outlets.is_empty() {
        return Err(SegmentationError::EmptyOutletList);
    }
    let labels: &[RatingClass] = match classes {
        2 => &[RatingClass::Low, RatingClass::High],
        3 => &[RatingClass::Low, RatingClass::Medium, RatingClass::High],
        k => return Err(SegmentationError::UnsupportedClassCount(k)),
    };
    let mut sorted: Vec<f64> = outlets.iter().map(|o| o.quality_score).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f64> = (1..classes)
        .map(|k| sorted[(k * n).div_ceil(classes) - 1])
        .collect();
    Ok(classify_by(outlets, &cuts, labels))
}

fn classify_by(outlets: &[Outlet], cuts: &[f64], labels: &[RatingClass]) -> Vec<Outlet> {
    outlets
        .iter()
        .map(|o| {
            let idx = cuts.iter().position(|&c| o.quality_score <= c).unwrap_or(cuts.len());
            Outlet {
                rating_class: Some(labels[idx]),
                ..o.clone()
            }
        })
        .collect()
}

/// Bucketed outlets keyed by registrable domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutletTable {
    outlets: BTreeMap<String, Outlet>,
}

impl OutletTable {
    pub fn new(outlets: Vec<Outlet>) -> Self {
        OutletTable {
            outlets: outlets.into_iter().map(|o| (o.domain.clone(), o)).collect(),
        }
    }

    pub fn get(&self, domain: &str) -> Option<&Outlet> {
        self.outlets.get(domain)
    }

    pub fn class_of(&self, domain: &str) -> Option<RatingClass> {
        self.get(domain).and_then(|o| o.rating_class)
    }

    pub fn in_class(&self, class: RatingClass) -> impl Iterator<Item = &Outlet> {
        self.outlets.values().filter(move |o| o.rating_class == Some(class))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Outlet> {
        self.outlets.values()
    }

    pub fn len(&self) -> usize {
        self.outlets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outlets.is_empty()
    }

    pub fn has_class(&self, class: RatingClass) -> bool {
        self.in_class(class).next().is_some()
    }
}
