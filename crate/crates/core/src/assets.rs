//! Lexicons, lists and tables the indicators depend on. Every asset has a
//! bundled default and can be replaced by a file; the outlet ranking has no
//! bundled default.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{bundled_subjective_lexicon, ContentAnalyzer, HeuristicClickbait};
use crate::ingestion::ArticleParser;
use crate::references::{ReferenceClassifier, SciDomains, SuffixList};
use crate::segmentation::{
    bucket_outlets, bucket_outlets_quantile, load_outlet_ranking, OutletTable, Taxonomy,
};
use crate::social::{bundled_cues, parse_cues, LexiconStance, SocialAnalyzer};
use crate::text::parse_lexicon;

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("asset {asset}: {reason}")]
    Invalid { asset: &'static str, reason: String },
}

/// Optional overrides; `None` selects the bundled copy.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssetPaths {
    pub public_suffix: Option<PathBuf>,
    pub sci_domains: Option<PathBuf>,
    pub hyperbole: Option<PathBuf>,
    pub subjective: Option<PathBuf>,
    pub stance_cues: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub outlet_ranking: Option<PathBuf>,
}

/// How outlets are split into rating classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassScheme {
    /// `(low_hi, med_hi)`; quantiles are used when absent.
    pub boundaries: Option<(f64, f64)>,
    /// 2 or 3; only consulted for quantile splits.
    pub classes: usize,
}

impl Default for ClassScheme {
    fn default() -> Self {
        ClassScheme {
            boundaries: None,
            classes: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Assets {
    pub parser: ArticleParser,
    pub classifier: ReferenceClassifier,
    pub content: ContentAnalyzer,
    pub social: SocialAnalyzer,
    pub taxonomy: Taxonomy,
    pub outlets: OutletTable,
    pub psl_version: String,
}

fn read(path: &Path) -> Result<String, AssetError> {
    fs::read_to_string(path).map_err(|source| AssetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn invalid(asset: &'static str) -> impl Fn(String) -> AssetError {
    move |reason| AssetError::Invalid { asset, reason }
}

impl Assets {
    /// Bundled assets with the given outlet table.
    pub fn bundled(outlets: OutletTable) -> Self {
        let suffixes = SuffixList::bundled();
        Assets {
            psl_version: suffixes.version().to_string(),
            parser: ArticleParser::new(suffixes.clone()),
            classifier: ReferenceClassifier::new(suffixes, SciDomains::bundled()),
            content: ContentAnalyzer::default(),
            social: SocialAnalyzer::default(),
            taxonomy: Taxonomy::bundled(),
            outlets,
        }
    }

    pub fn load(paths: &AssetPaths, tau: f64, scheme: ClassScheme) -> Result<Self, AssetError> {
        let suffixes = match &paths.public_suffix {
            Some(p) => SuffixList::parse(&read(p)?),
            None => SuffixList::bundled(),
        };
        let sci = match &paths.sci_domains {
            Some(p) => SciDomains::parse(&read(p)?),
            None => SciDomains::bundled(),
        };
        let hyperbole = match &paths.hyperbole {
            Some(p) => HeuristicClickbait::new(parse_lexicon(&read(p)?)),
            None => HeuristicClickbait::default(),
        };
        let subjective = match &paths.subjective {
            Some(p) => parse_lexicon(&read(p)?),
            None => bundled_subjective_lexicon(),
        };
        let cues = match &paths.stance_cues {
            Some(p) => parse_cues(&read(p)?).map_err(|e| invalid("stance_cues")(e.to_string()))?,
            None => bundled_cues(),
        };
        let social = SocialAnalyzer::new(Arc::new(LexiconStance::new(cues)), tau)
            .map_err(|e| invalid("tau")(e.to_string()))?;
        let taxonomy = match &paths.taxonomy {
            Some(p) => Taxonomy::from_json(&read(p)?).map_err(|e| invalid("taxonomy")(e.to_string()))?,
            None => Taxonomy::bundled(),
        };
        let outlets = match &paths.outlet_ranking {
            Some(p) => {
                let bytes = fs::read(p).map_err(|source| AssetError::Io {
                    path: p.clone(),
                    source,
                })?;
                let ranked = load_outlet_ranking(&bytes, &suffixes)
                    .map_err(|e| invalid("outlet_ranking")(e.to_string()))?;
                classify(&ranked, scheme).map_err(invalid("outlet_ranking"))?
            }
            None => OutletTable::default(),
        };
        Ok(Assets {
            psl_version: suffixes.version().to_string(),
            parser: ArticleParser::new(suffixes.clone()),
            classifier: ReferenceClassifier::new(suffixes, sci),
            content: ContentAnalyzer::new(Arc::new(hyperbole), subjective),
            social,
            taxonomy,
            outlets,
        })
    }
}

/// Buckets a loaded ranking; an empty ranking gives an empty table.
pub fn classify(
    ranked: &[crate::segmentation::Outlet],
    scheme: ClassScheme,
) -> Result<OutletTable, String> {
    if ranked.is_empty() {
        return Ok(OutletTable::default());
    }
    let bucketed = match scheme.boundaries {
        Some(b) => bucket_outlets(ranked, Some(b)),
        None => bucket_outlets_quantile(ranked, scheme.classes),
    }
    .map_err(|e| e.to_string())?;
    Ok(OutletTable::new(bucketed))
}
