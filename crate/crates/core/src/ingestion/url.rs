//! URL canonicalization for article identity.
//!
//! Rules, applied in order:
//! 1. parse as an absolute URL with a host (scheme and host are lowercased and
//!    default ports dropped by the parser; an empty path becomes `/`);
//! 2. drop the fragment;
//! 3. drop tracking parameters: any `utm_*` key, `fbclid`, `gclid`;
//! 4. canonicalize percent-escapes in path and query: unreserved characters
//!    are decoded, every remaining escape uses upper-case hex.

use sha2::{Digest, Sha256};
use url::Url;

use super::IngestError;

pub const TRACKING_PARAMS: &[&str] = &["fbclid", "gclid"];
pub const TRACKING_PREFIXES: &[&str] = &["utm_"];

fn is_tracking(key: &str) -> bool {
    let key = key.to_ascii_lowercase();
    TRACKING_PARAMS.contains(&key.as_str()) || TRACKING_PREFIXES.iter().any(|p| key.starts_with(p))
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~')
}

fn canonical_escapes(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%'
            && i + 2 < bytes.len()
            && bytes[i + 1].is_ascii_hexdigit()
            && bytes[i + 2].is_ascii_hexdigit()
        {
            let hex = &s[i + 1..i + 3];
            if let Ok(b) = u8::from_str_radix(hex, 16) {
                if is_unreserved(b) {
                    out.push(b as char);
                } else {
                    out.push('%');
                    out.push_str(&hex.to_ascii_uppercase());
                }
                i += 3;
                continue;
            }
        }
        // input is ASCII after URL serialization
        out.push(bytes[i] as char);
        i += 1;
    }
    out
}

pub fn normalize_url(raw: &str) -> Result<String, IngestError> {
    let mut url = Url::parse(raw.trim()).map_err(|_| IngestError::MalformedUrl(raw.to_string()))?;
    if url.cannot_be_a_base() || url.host_str().is_none_or(str::is_empty) {
        return Err(IngestError::MalformedUrl(raw.to_string()));
    }
    url.set_fragment(None);

    let query = url.query().map(|q| {
        q.split('&')
            .filter(|pair| !pair.is_empty())
            .filter(|pair| {
                let key = pair.split('=').next().unwrap_or_default();
                !is_tracking(key)
            })
            .map(canonical_escapes)
            .collect::<Vec<_>>()
            .join("&")
    });
    match query {
        Some(q) if !q.is_empty() => url.set_query(Some(&q)),
        _ => url.set_query(None),
    }

    let path = canonical_escapes(url.path());
    url.set_path(&path);
    Ok(url.to_string())
}

/// Content address of an article: hex SHA-256 of its normalized URL,
/// truncated to 128 bits.
pub fn article_id(normalized_url: &str) -> String {
    let digest = Sha256::digest(normalized_url.as_bytes());
    hex::encode(&digest[..16])
}
