//! Registrable-domain (eTLD+1) lookup over a public-suffix rule snapshot.

use std::collections::HashSet;
use std::net::IpAddr;

use super::ReferenceError;

const BUNDLED: &str = include_str!("../../assets/public_suffix.dat");

#[derive(Debug, Clone)]
pub struct SuffixList {
    version: String,
    rules: HashSet<String>,
    wildcards: HashSet<String>,
    exceptions: HashSet<String>,
}

impl SuffixList {
    /// The snapshot vendored under `assets/public_suffix.dat`.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED)
    }

    pub fn parse(source: &str) -> Self {
        let mut version = String::from("unversioned");
        let mut rules = HashSet::new();
        let mut wildcards = HashSet::new();
        let mut exceptions = HashSet::new();
        for line in source.lines() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix("//") {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = v.trim().to_string();
                }
                continue;
            }
            let Some(rule) = line.split_whitespace().next() else {
                continue;
            };
            let rule = rule.to_ascii_lowercase();
            if let Some(exc) = rule.strip_prefix('!') {
                exceptions.insert(exc.to_string());
            } else if let Some(parent) = rule.strip_prefix("*.") {
                wildcards.insert(parent.to_string());
            } else {
                rules.insert(rule);
            }
        }
        SuffixList {
            version,
            rules,
            wildcards,
            exceptions,
        }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Number of labels in the public suffix of `labels` (a host split on '.').
    fn suffix_len(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        let mut best = 1; // implicit "*" rule
        for i in 0..n {
            let candidate = labels[i..].join(".");
            if self.exceptions.contains(&candidate) {
                // exception rules win outright: suffix is the candidate minus its first label
                return n - i - 1;
            }
            let len = n - i;
            if self.rules.contains(&candidate) && len > best {
                best = len;
            }
            if i + 1 < n {
                let parent = labels[i + 1..].join(".");
                if self.wildcards.contains(&parent) && len > best {
                    best = len;
                }
            }
        }
        best
    }

    /// eTLD+1 of `host`. Hosts that are themselves a public suffix, and IP
    /// literals, are returned unchanged.
    pub fn registrable_domain(&self, host: &str) -> Result<String, ReferenceError> {
        let host = normalize_host(host)?;
        if host.parse::<IpAddr>().is_ok() {
            return Ok(host);
        }
        let labels: Vec<&str> = host.split('.').collect();
        let suffix = self.suffix_len(&labels);
        if labels.len() <= suffix {
            return Ok(host);
        }
        Ok(labels[labels.len() - suffix - 1..].join("."))
    }
}

fn normalize_host(host: &str) -> Result<String, ReferenceError> {
    let trimmed = host.trim();
    let trimmed = trimmed
        .strip_prefix('[')
        .and_then(|h| h.strip_suffix(']'))
        .unwrap_or(trimmed);
    let lowered = trimmed.trim_end_matches('.').to_ascii_lowercase();
    if lowered.is_empty() {
        return Err(ReferenceError::InvalidHost(host.to_string()));
    }
    if lowered.parse::<IpAddr>().is_ok() {
        return Ok(lowered);
    }
    let legal = lowered.split('.').all(|label| {
        !label.is_empty()
            && label.len() <= 63
            && !label.starts_with('-')
            && !label.ends_with('-')
            && label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    });
    if !legal {
        return Err(ReferenceError::InvalidHost(host.to_string()));
    }
    Ok(lowered)
}
