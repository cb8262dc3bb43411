//! Article extraction from raw HTML.
//!
//! The main content region is the largest cluster of `<p>` siblings (same
//! parent element) measured in characters of text, ignoring navigation and
//! page chrome. The body is that cluster's paragraphs joined by blank lines,
//! and references are the anchors found inside the cluster's parent element.

use std::collections::{HashMap, HashSet};

use chrono::{DateTime, Utc};
use ego_tree::{NodeId, NodeRef};
use scraper::{ElementRef, Html, Node, Selector};
use url::Url;

use super::url::{article_id, normalize_url};
use super::{Article, IngestError, ReferenceLink};
use crate::references::SuffixList;

/// Subtrees never considered part of an article body.
const CHROME: &[&str] = &[
    "nav", "footer", "header", "aside", "script", "style", "noscript", "form", "template",
    "iframe", "svg", "button", "select",
];

const BYLINE_MAX_WORDS: usize = 6;

fn selector(s: &str) -> Selector {
    Selector::parse(s).expect("static selector")
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn in_chrome(node: NodeRef<'_, Node>) -> bool {
    node.ancestors().any(|a| {
        a.value()
            .as_element()
            .is_some_and(|e| CHROME.contains(&e.name()))
    })
}

fn meta_content(doc: &Html, sel: &str) -> Option<String> {
    doc.select(&selector(sel))
        .filter_map(|e| e.value().attr("content"))
        .map(collapse)
        .find(|c| !c.is_empty())
}

/// Lowercase words allowed inside a personal name.
const NAME_PARTICLES: &[&str] = &["and", "de", "da", "del", "der", "di", "la", "le", "van", "von", "bin"];

/// "By Jane Doe" → "Jane Doe"; anything after the leading "By" that does not
/// look like a short capitalized name is rejected.
fn strip_by(line: &str) -> Option<String> {
    let line = collapse(line);
    let lower = line.to_lowercase();
    if !(lower.starts_with("by ") || lower.starts_with("by:")) {
        return None;
    }
    let name = line[3..]
        .split(['|', ',', '\u{2022}', '\u{2013}', '\u{2014}'])
        .next()
        .unwrap_or_default()
        .trim();
    let words: Vec<&str> = name.split_whitespace().collect();
    let capitalized = |w: &&str| w.chars().next().is_some_and(char::is_uppercase);
    let plausible = (1..=BYLINE_MAX_WORDS).contains(&words.len())
        && words.iter().any(capitalized)
        && words
            .iter()
            .all(|w| capitalized(w) || NAME_PARTICLES.contains(w));
    plausible.then(|| name.to_string())
}

fn element_text(el: ElementRef<'_>) -> String {
    collapse(&el.text().collect::<String>())
}

#[derive(Debug, Clone)]
pub struct ArticleParser {
    suffixes: SuffixList,
}

impl Default for ArticleParser {
    fn default() -> Self {
        ArticleParser::new(SuffixList::bundled())
    }
}

struct BodyWriter<'a> {
    cluster: &'a HashSet<NodeId>,
    skip: Option<NodeId>,
    body: String,
    content_start: Option<usize>,
    pending_space: bool,
    anchors: Vec<(String, String, usize)>,
}

impl BodyWriter<'_> {
    fn push_text(&mut self, text: &str) {
        let Some(start) = self.content_start else {
            return;
        };
        for c in text.chars() {
            if c.is_whitespace() {
                self.pending_space = true;
            } else {
                if self.pending_space && self.body.len() > start {
                    self.body.push(' ');
                }
                self.pending_space = false;
                self.body.push(c);
            }
        }
    }

    fn cursor(&self) -> usize {
        match self.content_start {
            Some(start) if self.pending_space && self.body.len() > start => self.body.len() + 1,
            _ => self.body.len(),
        }
    }

    fn walk(&mut self, node: NodeRef<'_, Node>) {
        match node.value() {
            Node::Text(t) => self.push_text(t),
            Node::Element(e) => {
                if CHROME.contains(&e.name()) || Some(node.id()) == self.skip {
                    return;
                }
                if e.name() == "br" {
                    self.pending_space = true;
                    return;
                }
                if e.name() == "a" {
                    if let Some(href) = e.attr("href") {
                        let text = ElementRef::wrap(node).map(element_text).unwrap_or_default();
                        self.anchors.push((href.to_string(), text, self.cursor()));
                    }
                }
                if self.content_start.is_none() && self.cluster.contains(&node.id()) {
                    let mark = self.body.len();
                    if !self.body.is_empty() {
                        self.body.push_str("\n\n");
                    }
                    self.content_start = Some(self.body.len());
                    self.pending_space = false;
                    for child in node.children() {
                        self.walk(child);
                    }
                    if Some(self.body.len()) == self.content_start {
                        self.body.truncate(mark);
                    }
                    self.content_start = None;
                    self.pending_space = false;
                } else {
                    for child in node.children() {
                        self.walk(child);
                    }
                }
            }
            _ => {}
        }
    }
}

impl ArticleParser {
    pub fn new(suffixes: SuffixList) -> Self {
        ArticleParser { suffixes }
    }

    pub fn parse(
        &self,
        html: &[u8],
        base_url: &str,
        fetched_at: DateTime<Utc>,
    ) -> Result<Article, IngestError> {
        let normalized = normalize_url(base_url)?;
        let base = Url::parse(&normalized).map_err(|_| IngestError::MalformedUrl(base_url.into()))?;
        let outlet_domain = self
            .suffixes
            .registrable_domain(base.host_str().unwrap_or_default())
            .map_err(|_| IngestError::MalformedUrl(base_url.into()))?;
        if html.is_empty() {
            return Err(IngestError::EmptyDocument);
        }
        let source = String::from_utf8_lossy(html);
        let doc = Html::parse_document(&source);

        let title = meta_content(&doc, r#"meta[property="og:title"]"#)
            .or_else(|| {
                doc.select(&selector("title"))
                    .map(element_text)
                    .find(|t| !t.is_empty())
            })
            .unwrap_or_default();

        // group paragraphs by parent, in document order of first appearance
        let mut clusters: Vec<(NodeId, Vec<NodeId>, usize)> = Vec::new();
        let mut slot: HashMap<NodeId, usize> = HashMap::new();
        for p in doc.select(&selector("p")) {
            if in_chrome(*p) {
                continue;
            }
            let len = element_text(p).chars().count();
            if len == 0 {
                continue;
            }
            let Some(parent) = p.parent() else { continue };
            let idx = *slot.entry(parent.id()).or_insert_with(|| {
                clusters.push((parent.id(), Vec::new(), 0));
                clusters.len() - 1
            });
            clusters[idx].1.push(p.id());
            clusters[idx].2 += len;
        }
        let best = clusters
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.2.cmp(&b.2).then(ib.cmp(ia)))
            .map(|(_, c)| c);

        let mut byline = meta_content(&doc, r#"meta[name="author"]"#)
            .or_else(|| meta_content(&doc, r#"meta[property="article:author"]"#))
            .filter(|a| Url::parse(a).is_err())
            .map(|a| strip_by(&a).unwrap_or(a));
        let mut skip = None;
        if byline.is_none() {
            if let Some((_, paras, _)) = best {
                let first = ElementRef::wrap(doc.tree.get(paras[0]).expect("node exists"))
                    .expect("paragraph is an element");
                if let Some(name) = strip_by(&element_text(first)) {
                    byline = Some(name);
                    skip = Some(paras[0]);
                }
            }
        }
        if byline.is_none() {
            byline = doc
                .select(&selector(r#"[class*="byline"], [rel="author"], [itemprop="author"]"#))
                .map(element_text)
                .map(|t| strip_by(&t).unwrap_or(t))
                .find(|t| !t.is_empty());
        }

        let published_at = meta_content(&doc, r#"meta[property="article:published_time"]"#)
            .or_else(|| meta_content(&doc, r#"meta[name="date"]"#))
            .and_then(|t| DateTime::parse_from_rfc3339(&t).ok())
            .map(|t| t.with_timezone(&Utc));

        let (body, anchors) = match best {
            Some((parent, paras, _)) => {
                let cluster: HashSet<NodeId> = paras.iter().copied().collect();
                let mut writer = BodyWriter {
                    cluster: &cluster,
                    skip,
                    body: String::new(),
                    content_start: None,
                    pending_space: false,
                    anchors: Vec::new(),
                };
                let container = doc.tree.get(*parent).expect("node exists");
                for child in container.children() {
                    writer.walk(child);
                }
                (writer.body, writer.anchors)
            }
            None => (String::new(), Vec::new()),
        };

        if title.is_empty() && body.is_empty() {
            return Err(IngestError::EmptyDocument);
        }

        let mut seen = HashSet::new();
        let mut references = Vec::new();
        for (href, anchor_text, position) in anchors {
            let href = href.trim();
            if href.is_empty() || href.starts_with('#') {
                continue;
            }
            let Ok(resolved) = base.join(href) else { continue };
            if !matches!(resolved.scheme(), "http" | "https") {
                continue;
            }
            let Ok(norm) = normalize_url(resolved.as_str()) else {
                continue;
            };
            if seen.insert(norm.clone()) {
                references.push(ReferenceLink {
                    href: norm,
                    anchor_text,
                    position: position.min(body.len()),
                });
            }
        }

        Ok(Article {
            article_id: article_id(&normalized),
            url: normalized,
            outlet_domain,
            title,
            body,
            byline,
            published_at,
            references,
            fetched_at,
        })
    }
}

/// Parses with the bundled public-suffix snapshot.
pub fn parse_article_html(
    html: &[u8],
    base_url: &str,
    fetched_at: DateTime<Utc>,
) -> Result<Article, IngestError> {
    ArticleParser::default().parse(html, base_url, fetched_at)
}
