//! Topic analytics over the hot store and archive together.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;

use super::{Availability, ClassDensity, KdeResponse, Platform, PlatformError, StoredIndicators};
use crate::analytics::{
    class_activity_series, density_curve, rolling_mean, ActivitySeries, DailyCounts, KdeMetric, KdeScale,
};
use crate::ingestion::Posting;
use crate::segmentation::RatingClass;
use crate::store::{decode, keys, RecordKind, StoreError};

pub const ROLLING_WINDOW_DAYS: usize = 7;

impl Platform {
    /// Every stored posting, hot and archived, in key order.
    pub fn all_postings(&self) -> Result<Vec<Posting>, StoreError> {
        let mut records = self.store().scan_prefix(keys::POSTING)?;
        records.extend(self.archive().scan_kind(self.store(), RecordKind::Postings)?);
        records.sort_by(|a, b| a.0.cmp(&b.0));
        records.iter().map(|(k, v)| decode(k, v)).collect()
    }

    pub fn all_indicators(&self) -> Result<BTreeMap<String, StoredIndicators>, StoreError> {
        self.store()
            .scan_prefix(keys::INDICATORS)?
            .into_iter()
            .map(|(k, v)| {
                let ind: StoredIndicators = decode(&k, &v)?;
                Ok((ind.article_id.clone(), ind))
            })
            .collect()
    }

    fn posting_outlet(&self, posting: &Posting) -> Option<String> {
        let url = url::Url::parse(&posting.url).ok()?;
        self.assets()
            .classifier
            .registrable_domain(url.host_str()?)
            .ok()
    }

    fn check_topic(&self, topic: &str) -> Result<(), PlatformError> {
        match self.assets().taxonomy.get(topic) {
            Some(_) => Ok(()),
            None => Err(PlatformError::UnknownTopic(topic.to_string())),
        }
    }

    fn classes(&self, class: Option<RatingClass>) -> Vec<RatingClass> {
        match class {
            Some(c) => vec![c],
            None => RatingClass::ALL
                .into_iter()
                .filter(|c| self.assets().outlets.has_class(*c))
                .collect(),
        }
    }

    /// Daily counts for ranked outlets. Postings whose article has not been
    /// fetched and indexed yet are left out of both numerator and denominator.
    pub fn activity_counts(&self, topic: &str) -> Result<(DailyCounts, Option<(NaiveDate, NaiveDate)>), PlatformError> {
        self.check_topic(topic)?;
        let indicators = self.all_indicators()?;
        let mut counts = DailyCounts::new();
        let mut span: Option<(NaiveDate, NaiveDate)> = None;
        for posting in self.all_postings()? {
            let Some(outlet) = self.posting_outlet(&posting) else { continue };
            if self.assets().outlets.get(&outlet).is_none() {
                continue;
            }
            let Some(ind) = indicators.get(&posting.article_id) else { continue };
            let date = posting.posted_at.date_naive();
            counts.record(&outlet, date, ind.topics.contains(topic));
            span = Some(match span {
                None => (date, date),
                Some((lo, hi)) => (lo.min(date), hi.max(date)),
            });
        }
        Ok((counts, span))
    }

    /// One series per requested class (all populated classes by default).
    /// Without a window the span of the stored postings is used.
    pub fn topic_activity(
        &self,
        topic: &str,
        from: Option<NaiveDate>,
        to: Option<NaiveDate>,
        class: Option<RatingClass>,
        smooth: bool,
    ) -> Result<Vec<ActivitySeries>, PlatformError> {
        let (counts, span) = self.activity_counts(topic)?;
        let (from, to) = match (from, to, span) {
            (Some(f), Some(t), _) => (f, t),
            (f, t, Some((lo, hi))) => (f.unwrap_or(lo), t.unwrap_or(hi)),
            (Some(f), None, None) => (f, f),
            (None, Some(t), None) => (t, t),
            (None, None, None) => return Ok(Vec::new()),
        };
        self.classes(class)
            .into_iter()
            .map(|c| {
                let s = class_activity_series(&counts, &self.assets().outlets, c, from, to)?;
                Ok(if smooth { rolling_mean(&s, ROLLING_WINDOW_DAYS) } else { s })
            })
            .collect()
    }

    /// Per-article samples of `metric` for articles carrying `topic`, grouped
    /// by the rating class of their outlet.
    pub fn kde_samples(
        &self,
        topic: &str,
        metric: KdeMetric,
    ) -> Result<BTreeMap<RatingClass, Vec<f64>>, PlatformError> {
        self.check_topic(topic)?;
        let indicators = self.all_indicators()?;
        let mut reach: HashMap<String, u64> = HashMap::new();
        if metric == KdeMetric::Reactions {
            for p in self.all_postings()? {
                *reach.entry(p.article_id.clone()).or_default() += p.reactions.total();
            }
        }
        let mut out: BTreeMap<RatingClass, Vec<f64>> = BTreeMap::new();
        for ind in indicators.values() {
            if !ind.topics.contains(topic) {
                continue;
            }
            let Some(class) = self.assets().outlets.class_of(&ind.outlet_domain) else { continue };
            let value = match metric {
                KdeMetric::Reactions => reach.get(&ind.article_id).copied().unwrap_or(0) as f64,
                KdeMetric::SciRefRatio => {
                    if self.config().exclude_zero_reference_articles && !ind.context.has_references {
                        continue;
                    }
                    ind.context.sci_ref_ratio
                }
            };
            out.entry(class).or_default().push(value);
        }
        Ok(out)
    }

    pub fn topic_kde(
        &self,
        topic: &str,
        metric: KdeMetric,
        log: bool,
        class: Option<RatingClass>,
    ) -> Result<KdeResponse, PlatformError> {
        if log && metric != KdeMetric::Reactions {
            return Err(PlatformError::InvalidInput(
                "log scale applies to the reactions metric only".into(),
            ));
        }
        let scale = if log { KdeScale::Log10p1 } else { KdeScale::Linear };
        let mut samples = self.kde_samples(topic, metric)?;
        let curves = self
            .classes(class)
            .into_iter()
            .map(|c| {
                let xs = samples.remove(&c).unwrap_or_default();
                ClassDensity {
                    rating_class: c,
                    n: xs.len(),
                    curve: Availability::from_result(density_curve(&xs, metric, scale)),
                }
            })
            .collect();
        Ok(KdeResponse {
            topic: topic.to_string(),
            metric,
            scale,
            curves,
        })
    }
}
