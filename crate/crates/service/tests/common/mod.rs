#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Duration, TimeZone, Utc};
use http_body_util::BodyExt;
use newsgauge_core::assets::{classify, Assets, ClassScheme};
use newsgauge_core::ingestion::StaticFetcher;
use newsgauge_core::platform::{Platform, PlatformConfig};
use newsgauge_core::references::SuffixList;
use newsgauge_core::reviews::ExpertRegistry;
use newsgauge_core::segmentation::load_outlet_ranking;
use newsgauge_core::store::{Archive, RedbStore};
use newsgauge_core::synthetic::SyntheticCorpus;
use tower::ServiceExt;

pub const EXPERT_TOKEN: &str = "tok-ada";
pub const OTHER_TOKEN: &str = "tok-bo";

pub struct Harness {
    pub platform: Arc<Platform>,
    pub fetcher: Arc<StaticFetcher>,
    pub now: Arc<Mutex<DateTime<Utc>>>,
    _dir: tempfile::TempDir,
}

impl Harness {
    pub fn router(&self) -> Router {
        newsgauge_service::api::router(self.platform.clone())
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

pub fn default_now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 4, 1, 12, 0, 0).unwrap()
}

pub fn harness(corpus: &SyntheticCorpus, now: DateTime<Utc>) -> Harness {
    harness_with(corpus, now, PlatformConfig::default())
}

pub fn harness_with(corpus: &SyntheticCorpus, now: DateTime<Utc>, config: PlatformConfig) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let ranked = load_outlet_ranking(corpus.ranking_csv.as_bytes(), &SuffixList::bundled()).unwrap();
    let outlets = classify(&ranked, ClassScheme { boundaries: None, classes: 2 }).unwrap();
    let fetcher = Arc::new(StaticFetcher::new(corpus.pages.clone()));
    let clock = Arc::new(Mutex::new(now));
    let c = clock.clone();
    let platform = Platform::new(
        Arc::new(RedbStore::in_memory().unwrap()),
        Archive::open(dir.path().join("archive")).unwrap(),
        Assets::bundled(outlets),
        config,
        fetcher.clone(),
    )
    .with_clock(Arc::new(move || *c.lock().unwrap()))
    .with_experts(ExpertRegistry::new([("dr-ada", EXPERT_TOKEN), ("dr-bo", OTHER_TOKEN)]));
    Harness {
        platform: Arc::new(platform),
        fetcher,
        now: clock,
        _dir: dir,
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("not json ({e}): {}", self.text()))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

pub async fn call(router: &Router, method: &str, uri: &str, token: Option<&str>, body: impl Into<Body>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let resp = router.clone().oneshot(req.body(body.into()).unwrap()).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

pub async fn get(router: &Router, uri: &str) -> Reply {
    call(router, "GET", uri, None, Body::empty()).await
}

/// One endpoint call compared with the in-process result.
pub struct Check {
    pub endpoint: String,
    pub status: StatusCode,
    pub expected_status: StatusCode,
    pub equal: bool,
}

impl Check {
    pub fn ok(&self) -> bool {
        self.equal && self.status == self.expected_status
    }
}

fn expected<T: serde::Serialize>(
    r: Result<T, newsgauge_core::platform::PlatformError>,
    ok: StatusCode,
) -> (StatusCode, Vec<u8>) {
    use newsgauge_service::api::{canonical_json, status_for};
    match r {
        Ok(v) => (ok, canonical_json(&v)),
        Err(e) => {
            let body = e.to_api_error();
            (status_for(&body.code), canonical_json(&body))
        }
    }
}

/// Drives two identically seeded platforms through the same operations, one
/// over HTTP and one in-process, and compares every response byte for byte.
pub async fn conformance(corpus: &SyntheticCorpus) -> Vec<Check> {
    use newsgauge_core::analytics::{activity_csv, density_csv, KdeMetric};
    use newsgauge_core::ingestion::article_id;
    use newsgauge_core::reviews::{Criterion, ReviewSubmission};
    use newsgauge_core::segmentation::RatingClass;
    use newsgauge_core::synthetic::TOPIC;

    let http = harness(corpus, default_now());
    let local = harness(corpus, default_now());
    let router = http.router();
    let p = local.platform.clone();
    let mut checks = Vec::new();
    let mut record = |endpoint: String, reply: Reply, (status, body): (StatusCode, Vec<u8>)| {
        checks.push(Check {
            endpoint,
            status: reply.status,
            expected_status: status,
            equal: reply.body == body,
        });
    };

    let reply = call(&router, "POST", "/ingest/postings", None, corpus.postings_ndjson.clone()).await;
    record("POST /ingest/postings".into(), reply, expected(p.ingest_ndjson(&corpus.postings_ndjson), StatusCode::OK));
    http.platform.pump().unwrap();
    p.pump().unwrap();

    record("GET /healthz".into(), get(&router, "/healthz").await, expected(Ok::<_, _>(p.health()), StatusCode::OK));
    record("GET /outlets".into(), get(&router, "/outlets").await, expected(Ok::<_, _>(p.outlets()), StatusCode::OK));

    let ids: Vec<String> = corpus.truth.iter().take(5).map(|t| article_id(&t.url)).collect();
    for id in ids.iter().chain(std::iter::once(&"0000unknown".to_string())) {
        let uri = format!("/articles/{id}");
        record(format!("GET {uri}"), get(&router, &uri).await, expected(p.article_report(id), StatusCode::OK));
    }

    let scores = |v: i64| Criterion::ALL.iter().map(|c| (c.as_str().to_string(), v)).collect();
    let submissions = [
        (EXPERT_TOKEN, "dr-ada", ReviewSubmission { expert_id: "dr-ada".into(), scores: scores(2), free_text: Some("thin sourcing".into()) }),
        (OTHER_TOKEN, "dr-bo", ReviewSubmission { expert_id: "dr-bo".into(), scores: scores(4), free_text: None }),
        (OTHER_TOKEN, "dr-bo", ReviewSubmission { expert_id: "dr-ada".into(), scores: scores(4), free_text: None }),
        (EXPERT_TOKEN, "dr-ada", ReviewSubmission { expert_id: "dr-ada".into(), scores: scores(9), free_text: None }),
    ];
    for (token, expert, sub) in submissions {
        let uri = format!("/articles/{}/reviews", ids[0]);
        let body = serde_json::to_vec(&sub).unwrap();
        let reply = call(&router, "POST", &uri, Some(token), body).await;
        record(format!("POST {uri}"), reply, expected(p.submit_review(&ids[0], expert, sub), StatusCode::CREATED));
    }
    let uri = format!("/articles/{}/reviews", ids[0]);
    let reply = call(&router, "POST", &uri, Some("wrong"), "{}").await;
    record(format!("POST {uri} (bad token)"), reply, expected(p.authenticate("wrong"), StatusCode::CREATED));
    for id in [&ids[0], &ids[1]] {
        let uri = format!("/articles/{id}/reviews");
        record(format!("GET {uri}"), get(&router, &uri).await, expected(p.list_reviews(id), StatusCode::OK));
    }
    let uri = format!("/articles/{}", ids[0]);
    record(format!("GET {uri} (reviewed)"), get(&router, &uri).await, expected(p.article_report(&ids[0]), StatusCode::OK));

    for url in [corpus.truth[7].url.as_str(), "https://unreachable.example.net/x", "no url"] {
        let body = serde_json::to_vec(&serde_json::json!({ "url": url })).unwrap();
        let reply = call(&router, "POST", "/evaluate", None, body).await;
        record(format!("POST /evaluate {url}"), reply, expected(p.evaluate_url(url), StatusCode::OK));
    }

    let (from, to) = (corpus.truth[0].date, corpus.truth[0].date + Duration::days(2));
    let activity_cases = [
        (String::new(), None, None, None, false),
        (format!("?from={from}&to={to}"), Some(from), Some(to), None, false),
        ("?class=low&smooth=1".to_string(), None, None, Some(RatingClass::Low), true),
    ];
    for (qs, f, t, c, s) in activity_cases {
        let uri = format!("/topics/{TOPIC}/activity{qs}");
        record(format!("GET {uri}"), get(&router, &uri).await, expected(p.topic_activity(TOPIC, f, t, c, s), StatusCode::OK));
    }
    let uri = "/topics/no-such-topic/activity".to_string();
    record(format!("GET {uri}"), get(&router, &uri).await, expected(p.topic_activity("no-such-topic", None, None, None, false), StatusCode::OK));

    let kde_cases = [
        ("metric=reactions&log=1", KdeMetric::Reactions, true, None),
        ("metric=reactions&log=0", KdeMetric::Reactions, false, None),
        ("metric=sci_ref_ratio", KdeMetric::SciRefRatio, false, None),
        ("metric=sci_ref_ratio&class=high", KdeMetric::SciRefRatio, false, Some(RatingClass::High)),
        ("metric=sci_ref_ratio&log=1", KdeMetric::SciRefRatio, true, None),
    ];
    for (qs, m, log, c) in kde_cases {
        let uri = format!("/topics/{TOPIC}/kde?{qs}");
        record(format!("GET {uri}"), get(&router, &uri).await, expected(p.topic_kde(TOPIC, m, log, c), StatusCode::OK));
    }

    let uri = format!("/export/activity?topic={TOPIC}");
    let csv = activity_csv(&p.topic_activity(TOPIC, None, None, None, false).unwrap()).into_bytes();
    record(format!("GET {uri}"), get(&router, &uri).await, (StatusCode::OK, csv));
    let uri = format!("/export/kde?topic={TOPIC}&metric=sci_ref_ratio&class=low");
    let resp = p.topic_kde(TOPIC, KdeMetric::SciRefRatio, false, Some(RatingClass::Low)).unwrap();
    let curve = resp.curves[0].curve.value().unwrap();
    record(format!("GET {uri}"), get(&router, &uri).await, (StatusCode::OK, density_csv(curve).into_bytes()));

    checks
}
