//! HTTP surface. Handlers are thin: parse, call the platform on the blocking
//! pool, serialize canonically.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::NaiveDate;
use newsgauge_core::analytics::{activity_csv, density_csv, KdeMetric};
use newsgauge_core::platform::{Availability, Platform, PlatformError};
use newsgauge_core::reviews::ReviewSubmission;
use newsgauge_core::segmentation::RatingClass;
use serde::{Deserialize, Serialize};

/// JSON with object keys sorted at every level. Every endpoint body is
/// produced by this function, so it is also the comparison form for tests.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_value(value).expect("response types serialize");
    v.sort_all_objects();
    serde_json::to_vec(&v).expect("values serialize")
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "not_found" | "unknown_topic" => StatusCode::NOT_FOUND,
        "invalid_input" | "unknown_class" | "empty_window" | "invalid_cutoff" => StatusCode::BAD_REQUEST,
        "unauthorized" => StatusCode::UNAUTHORIZED,
        "forbidden" | "unknown_expert" => StatusCode::FORBIDDEN,
        "fetch_failed" | "parse_failed" | "invalid_score" | "no_reviews" | "invalid_sample" => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        "store_unavailable" | "partial_migration" => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

pub struct ApiFailure(PlatformError);

impl From<PlatformError> for ApiFailure {
    fn from(e: PlatformError) -> Self {
        ApiFailure(e)
    }
}

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        let body = self.0.to_api_error();
        let status = status_for(&body.code);
        if status.is_server_error() {
            tracing::error!(code = %body.code, message = %body.message, "request failed");
        }
        json_response(status, &body)
    }
}

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        canonical_json(value),
    )
        .into_response()
}

fn csv_response(body: String) -> Response {
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8"))],
        body,
    )
        .into_response()
}

type ApiResult = Result<Response, ApiFailure>;
type Shared = Arc<Platform>;

async fn blocking<T, F>(platform: &Shared, f: F) -> Result<T, PlatformError>
where
    T: Send + 'static,
    F: FnOnce(&Platform) -> Result<T, PlatformError> + Send + 'static,
{
    let p = platform.clone();
    match tokio::task::spawn_blocking(move || f(&p)).await {
        Ok(r) => r,
        Err(e) => std::panic::resume_unwind(e.into_panic()),
    }
}

fn invalid(msg: impl Into<String>) -> ApiFailure {
    ApiFailure(PlatformError::InvalidInput(msg.into()))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiFailure> {
    serde_json::from_slice(body).map_err(|e| invalid(format!("invalid request body: {e}")))
}

/// Query parameters as sent; validation happens here so every rejection
/// uses the structured error body.
#[derive(Debug, Default)]
pub struct TopicQuery {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub class: Option<RatingClass>,
    pub smooth: bool,
    pub metric: Option<KdeMetric>,
    pub log: bool,
    pub topic: Option<String>,
}

fn flag(name: &str, v: &str) -> Result<bool, ApiFailure> {
    match v {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        _ => Err(invalid(format!("{name} must be 0 or 1"))),
    }
}

impl TopicQuery {
    pub fn parse(params: &HashMap<String, String>) -> Result<Self, ApiFailure> {
        let mut q = TopicQuery::default();
        for (k, v) in params {
            match k.as_str() {
                "from" | "to" => {
                    let d = NaiveDate::parse_from_str(v, "%Y-%m-%d")
                        .map_err(|_| invalid(format!("{k} must be a YYYY-MM-DD date")))?;
                    if k == "from" {
                        q.from = Some(d);
                    } else {
                        q.to = Some(d);
                    }
                }
                "class" => {
                    q.class = Some(RatingClass::parse(v).ok_or_else(|| invalid(format!("unknown class {v:?}")))?)
                }
                "smooth" => q.smooth = flag("smooth", v)?,
                "log" => q.log = flag("log", v)?,
                "metric" => {
                    q.metric = Some(KdeMetric::parse(v).ok_or_else(|| invalid(format!("unknown metric {v:?}")))?)
                }
                "topic" => q.topic = Some(v.clone()),
                other => return Err(invalid(format!("unknown query parameter {other:?}"))),
            }
        }
        Ok(q)
    }

    fn metric(&self) -> Result<KdeMetric, ApiFailure> {
        self.metric
            .ok_or_else(|| invalid("metric is required (reactions or sci_ref_ratio)"))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    url: String,
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

async fn ingest_postings(State(p): State<Shared>, body: Bytes) -> ApiResult {
    let text = String::from_utf8(body.to_vec()).map_err(|_| invalid("body must be UTF-8"))?;
    let outcomes = blocking(&p, move |p| p.ingest_ndjson(&text)).await?;
    Ok(json_response(StatusCode::OK, &outcomes))
}

async fn evaluate(State(p): State<Shared>, body: Bytes) -> ApiResult {
    let req: EvaluateRequest = parse_body(&body)?;
    let report = blocking(&p, move |p| p.evaluate_url(&req.url)).await?;
    Ok(json_response(StatusCode::OK, &report))
}

async fn article(State(p): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let report = blocking(&p, move |p| p.article_report(&id)).await?;
    Ok(json_response(StatusCode::OK, &report))
}

async fn list_reviews(State(p): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let reviews = blocking(&p, move |p| p.list_reviews(&id)).await?;
    Ok(json_response(StatusCode::OK, &reviews))
}

async fn submit_review(State(p): State<Shared>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let expert = p.authenticate(bearer(&headers).unwrap_or(""))?;
    let submission: ReviewSubmission = parse_body(&body)?;
    let outcome = blocking(&p, move |p| p.submit_review(&id, &expert, submission)).await?;
    Ok(json_response(StatusCode::CREATED, &outcome))
}

async fn activity(State(p): State<Shared>, Path(topic): Path<String>, Query(raw): Query<HashMap<String, String>>) -> ApiResult {
    let q = TopicQuery::parse(&raw)?;
    let series = blocking(&p, move |p| p.topic_activity(&topic, q.from, q.to, q.class, q.smooth)).await?;
    Ok(json_response(StatusCode::OK, &series))
}

async fn kde(State(p): State<Shared>, Path(topic): Path<String>, Query(raw): Query<HashMap<String, String>>) -> ApiResult {
    let q = TopicQuery::parse(&raw)?;
    let metric = q.metric()?;
    let resp = blocking(&p, move |p| p.topic_kde(&topic, metric, q.log, q.class)).await?;
    Ok(json_response(StatusCode::OK, &resp))
}

fn required_topic(q: &TopicQuery) -> Result<String, ApiFailure> {
    q.topic.clone().ok_or_else(|| invalid("topic is required"))
}

async fn export_activity(State(p): State<Shared>, Query(raw): Query<HashMap<String, String>>) -> ApiResult {
    let q = TopicQuery::parse(&raw)?;
    let topic = required_topic(&q)?;
    let series = blocking(&p, move |p| p.topic_activity(&topic, q.from, q.to, q.class, q.smooth)).await?;
    Ok(csv_response(activity_csv(&series)))
}

async fn export_kde(State(p): State<Shared>, Query(raw): Query<HashMap<String, String>>) -> ApiResult {
    let q = TopicQuery::parse(&raw)?;
    let topic = required_topic(&q)?;
    let metric = q.metric()?;
    let class = q.class.ok_or_else(|| invalid("class is required: the export holds one curve"))?;
    let resp = blocking(&p, move |p| p.topic_kde(&topic, metric, q.log, Some(class))).await?;
    match resp.curves.first().map(|c| &c.curve) {
        Some(Availability::Available { value }) => Ok(csv_response(density_csv(value))),
        Some(Availability::Unavailable { reason }) => Err(ApiFailure(PlatformError::InvalidInput(format!(
            "no density for class {}: {reason}",
            class.as_str()
        )))),
        None => Err(invalid("no curve")),
    }
}

async fn outlets(State(p): State<Shared>) -> Response {
    json_response(StatusCode::OK, &p.outlets())
}

async fn healthz(State(p): State<Shared>) -> Response {
    let report = p.health();
    let status = if report.status == "ok" {
        StatusCode::OK
    } else {
        StatusCode::SERVICE_UNAVAILABLE
    };
    json_response(status, &report)
}

async fn fallback() -> ApiFailure {
    ApiFailure(PlatformError::NotFound {
        kind: "route",
        id: String::new(),
    })
}

pub fn router(platform: Arc<Platform>) -> Router {
    Router::new()
        .route("/ingest/postings", post(ingest_postings))
        .route("/evaluate", post(evaluate))
        .route("/articles/{id}", get(article))
        .route("/articles/{id}/reviews", get(list_reviews).post(submit_review))
        .route("/topics/{id}/activity", get(activity))
        .route("/topics/{id}/kde", get(kde))
        .route("/export/activity", get(export_activity))
        .route("/export/kde", get(export_kde))
        .route("/outlets", get(outlets))
        .route("/healthz", get(healthz))
        .fallback(fallback)
        .with_state(platform)
}
