//! Seeded synthetic corpus: an outlet ranking, article pages and the posting
//! log that links to them, with known per-class parameters.
//!
//! Per article, the share of scientific references is drawn from
//! `Normal(sci_ratio_mean, SCI_SHARE_SD)`, clipped to [0, 1], and rounded to a
//! whole number of references out of 10, 20, 30 or 40. Reach is log-normal
//! around a common median, with a per-class log spread.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::Serialize;

use crate::segmentation::RatingClass;

pub const SCI_SHARE_SD: f64 = 0.04;
pub const REFERENCE_COUNTS: [usize; 4] = [10, 20, 30, 40];
pub const MEDIAN_REACH: f64 = 150.0;

const SCI_HOSTS: &[&str] = &[
    "www.nature.com",
    "arxiv.org",
    "www.nih.gov",
    "www.thelancet.com",
    "www.cdc.gov",
    "www.medrxiv.org",
    "journals.plos.org",
    "www.who.int",
];
const TOPIC_TITLES: &[&str] = &[
    "Coronavirus cases rise in {city}",
    "Officials outline coronavirus response in {city}",
    "Hospitals in {city} prepare for coronavirus patients",
    "Coronavirus testing expands across {city}",
];
const OTHER_TITLES: &[&str] = &[
    "City council in {city} approves new budget",
    "Transit upgrade planned for {city}",
    "Local team wins title in {city}",
    "Housing prices climb in {city}",
];
const CITIES: &[&str] = &["Seattle", "Milan", "Madrid", "Boston", "Lyon", "Porto", "Athens", "Denver"];
const POSTING_TEXTS: &[&str] = &["must read", "misleading headline", "worth reading", "", "interesting", "fake news"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassParams {
    pub class: RatingClass,
    pub outlets: usize,
    pub topic_prob: f64,
    pub sci_ratio_mean: f64,
    /// Standard deviation of ln(reach).
    pub reach_log_sd: f64,
    pub quality_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticParams {
    pub seed: u64,
    pub start: NaiveDate,
    pub days: u32,
    pub posts_per_outlet_day: u32,
    pub classes: Vec<ClassParams>,
}

impl Default for SyntheticParams {
    /// Two classes of five outlets over sixty days from 2020-01-15.
    fn default() -> Self {
        SyntheticParams {
            seed: 2020,
            start: NaiveDate::from_ymd_opt(2020, 1, 15).expect("valid date"),
            days: 60,
            posts_per_outlet_day: 10,
            classes: vec![
                ClassParams {
                    class: RatingClass::High,
                    outlets: 5,
                    topic_prob: 0.2,
                    sci_ratio_mean: 0.5,
                    reach_log_sd: 0.5,
                    quality_score: 8.0,
                },
                ClassParams {
                    class: RatingClass::Low,
                    outlets: 5,
                    topic_prob: 0.4,
                    sci_ratio_mean: 0.1,
                    reach_log_sd: 1.2,
                    quality_score: 2.0,
                },
            ],
        }
    }
}

/// What the generator planted for one article.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArticleTruth {
    pub url: String,
    pub outlet: String,
    pub class: RatingClass,
    pub date: NaiveDate,
    pub on_topic: bool,
    pub references: usize,
    pub scientific: usize,
    pub reach: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub ranking_csv: String,
    pub postings_ndjson: String,
    /// Page bodies keyed by article URL.
    pub pages: BTreeMap<String, Vec<u8>>,
    pub truth: Vec<ArticleTruth>,
}

pub const TOPIC: &str = "covid-19";

fn outlet_domain(class: RatingClass, idx: usize) -> String {
    format!("{}news{idx}.com", class.as_str())
}

fn page(title: &str, city: &str, on_topic: bool, refs: &[(String, String)], outlet: &str) -> String {
    let mut html = String::new();
    let _ = write!(
        html,
        "<!doctype html><html><head><title>{title} | {outlet}</title>\
         <meta property=\"og:title\" content=\"{title}\">\
         <meta name=\"author\" content=\"Desk Reporter\"></head><body>\
         <nav><a href=\"https://www.{outlet}/\">Home</a></nav><article><div class=\"body\">"
    );
    let lead = if on_topic {
        format!("Authorities in {city} gave an update on the coronavirus situation on Tuesday.")
    } else {
        format!("Authorities in {city} gave an update on local plans on Tuesday.")
    };
    let _ = write!(html, "<p>{lead} Officials said more details would follow later in the week.</p>");
    for chunk in refs.chunks(5) {
        html.push_str("<p>Reporting drew on several sources");
        for (href, text) in chunk {
            let _ = write!(html, ", including <a href=\"{href}\">{text}</a>");
        }
        html.push_str(". Readers can follow the links for the underlying material.</p>");
    }
    html.push_str("</div></article><footer><a href=\"/about\">About</a></footer></body></html>");
    html
}

pub fn generate(setup: &SyntheticParams) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut ranking_csv = String::from("domain,name,quality_score\n");
    let mut postings_ndjson = String::new();
    let mut pages = BTreeMap::new();
    let mut truth = Vec::new();

    for params in &setup.classes {
        for o in 0..params.outlets {
            let domain = outlet_domain(params.class, o);
            let _ = writeln!(
                ranking_csv,
                "{domain},{} News {o},{}",
                params.class.as_str(),
                params.quality_score + o as f64 * 0.1
            );
        }
    }

    for params in &setup.classes {
        let share = Normal::new(params.sci_ratio_mean, SCI_SHARE_SD).expect("finite parameters");
        let reach_dist = LogNormal::new(MEDIAN_REACH.ln(), params.reach_log_sd).expect("finite parameters");
        for o in 0..params.outlets {
            let domain = outlet_domain(params.class, o);
            for day in 0..setup.days {
                let date = setup.start + Duration::days(i64::from(day));
                for i in 0..setup.posts_per_outlet_day {
                    let on_topic = rng.random_bool(params.topic_prob);
                    let city = *CITIES.choose(&mut rng).expect("non-empty");
                    let template = if on_topic { TOPIC_TITLES } else { OTHER_TITLES };
                    let title = template.choose(&mut rng).expect("non-empty").replace("{city}", city);
                    let url = format!("https://www.{domain}/{}/story-{i}", date.format("%Y/%m/%d"));

                    let n_refs = *REFERENCE_COUNTS.choose(&mut rng).expect("non-empty");
                    let r: f64 = share.sample(&mut rng);
                    let n_sci = (r.clamp(0.0, 1.0) * n_refs as f64).round() as usize;
                    let mut refs = Vec::with_capacity(n_refs);
                    for j in 0..n_refs {
                        let (href, text) = if j < n_sci {
                            let host = SCI_HOSTS.choose(&mut rng).expect("non-empty");
                            (format!("https://{host}/paper/{day}-{o}-{i}-{j}"), "a study".to_string())
                        } else if j % 2 == 0 {
                            (format!("https://www.{domain}/related/{day}-{i}-{j}"), "earlier coverage".to_string())
                        } else {
                            (format!("https://www.wire{}.com/item/{day}-{o}-{i}-{j}", j % 7), "a report".to_string())
                        };
                        refs.push((href, text));
                    }
                    // interleave so the scientific links are not all up front
                    let mut order: Vec<usize> = (0..refs.len()).collect();
                    for k in (1..order.len()).rev() {
                        order.swap(k, rng.random_range(0..=k));
                    }
                    let shuffled: Vec<(String, String)> = order.iter().map(|&k| refs[k].clone()).collect();
                    pages.insert(url.clone(), page(&title, city, on_topic, &shuffled, &domain).into_bytes());

                    let reach = reach_dist.sample(&mut rng).round().max(0.0) as u64;
                    let shares = reach * 3 / 10;
                    let replies = reach / 10;
                    let likes = reach - shares - replies;
                    let minute = rng.random_range(0..60);
                    let posted_at = Utc
                        .from_utc_datetime(&date.and_hms_opt(i * 2, minute, 0).expect("valid time"))
                        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
                    let line = serde_json::json!({
                        "post_id": format!("syn-{domain}-{day}-{i}"),
                        "outlet_hint": format!("@{}", domain.trim_end_matches(".com")),
                        "url": url,
                        "text": POSTING_TEXTS.choose(&mut rng).expect("non-empty"),
                        "reactions": { "shares": shares, "likes": likes, "replies": replies },
                        "posted_at": posted_at,
                    });
                    postings_ndjson.push_str(&line.to_string());
                    postings_ndjson.push('\n');

                    truth.push(ArticleTruth {
                        url,
                        outlet: domain.clone(),
                        class: params.class,
                        date,
                        on_topic,
                        references: n_refs,
                        scientific: n_sci,
                        reach,
                    });
                }
            }
        }
    }

    SyntheticCorpus {
        ranking_csv,
        postings_ndjson,
        pages,
        truth,
    }
}
