//! JSON HTTP API.
//!
//! | method | path | body / query | reply |
//! |---|---|---|---|
//! | GET | `/api/health` | | status, loaded models |
//! | GET | `/api/taxonomy` | | version and nodes |
//! | POST | `/api/upload/text` | `{text, date?, id?}` | `{job_id}` |
//! | POST | `/api/upload/url` | `{url, date?}` | `{job_id}` |
//! | POST | `/api/upload/file` | multipart `file`, `format` | `{job_id}` |
//! | GET | `/api/jobs/{id}` | | [`Job`] |
//! | GET | `/api/documents/{id}` | | [`ClassifiedDocument`] |
//! | GET | `/api/summary/{job_id}` | `?k=` | [`Summary`] |
//! | POST | `/api/interventions/query` | `{text, top_k?}` | [`ClassifiedQuery`] |
//! | GET | `/api/trends` | `?window&from&to&format=json\|csv&partial` | series |
//! | GET | `/api/events/compare` | `?date&pre_days&post_days` | [`EventReport`] |
//!
//! Errors are `{"code": ..., "message": ...}` with a 4xx or 5xx status.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use concern_core::analytics::{
    event_comparison, keyword_cloud, rolling_average, trends_to_csv, AnalyticsError, ArticleLabel, CloudEntry,
    EventComparison, EventWindow, RollingOptions, Stopwords, TrendSeries, DEFAULT_WINDOW,
};
use concern_core::ingest::{ingest_bytes, Document, DocumentMeta, FileFormat, IngestOptions, SourceKind};
use concern_core::interventions::{classify_and_match, ClassifiedQuery, InterventionError, InterventionStore};
use concern_core::par::Execution;
use concern_core::taxonomy::Taxonomy;

use crate::classify::{classify_document, ClassifiedDocument, ModelError, Models};
use crate::fetch::{check_url, fetch_document};
use crate::jobs::{Job, JobContext, JobKind, JobOutput, JobRunner, JobState};
use crate::store::{Store, StoreError};

pub const DEFAULT_TOP_K: usize = 5;
pub const SUMMARY_EXAMPLES: usize = 3;
const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code.to_string(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::invalid(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::invalid(r.body_text())
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Missing => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_model", e.to_string()),
            other => ApiError::internal(other),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Inner {
    store: Store,
    jobs: JobRunner,
    taxonomy: Taxonomy,
    models: Models,
    interventions: InterventionStore,
    stopwords: Stopwords,
    cloud_size: usize,
    exec: Execution,
}

/// Shared handler state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

pub struct AppStateBuilder {
    store: Store,
    taxonomy: Taxonomy,
    models: Models,
    interventions: Option<InterventionStore>,
    workers: usize,
    cloud_size: usize,
    exec: Execution,
}

impl AppStateBuilder {
    pub fn models(mut self, models: Models) -> Self {
        self.models = models;
        self
    }

    pub fn interventions(mut self, store: InterventionStore) -> Self {
        self.interventions = Some(store);
        self
    }

    pub fn workers(mut self, n: usize) -> Self {
        self.workers = n;
        self
    }

    pub fn cloud_size(mut self, k: usize) -> Self {
        self.cloud_size = k;
        self
    }

    pub fn execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Fails jobs left unfinished by a previous process, then builds the state.
    pub fn build(self) -> Result<AppState, StoreError> {
        let jobs = JobRunner::new(self.store.clone(), self.workers);
        let n = jobs.recover()?;
        if n > 0 {
            tracing::warn!("{n} unfinished job(s) from a previous run marked failed");
        }
        let interventions = match self.interventions {
            Some(s) => s,
            None => InterventionStore::example(&self.taxonomy).expect("bundled intervention store is valid"),
        };
        Ok(AppState(Arc::new(Inner {
            store: self.store,
            jobs,
            taxonomy: self.taxonomy,
            models: self.models,
            interventions,
            stopwords: Stopwords::english(),
            cloud_size: self.cloud_size,
            exec: self.exec,
        })))
    }
}

impl AppState {
    pub fn builder(store: Store, taxonomy: Taxonomy) -> AppStateBuilder {
        AppStateBuilder {
            store,
            taxonomy,
            models: Models::default(),
            interventions: None,
            workers: 2,
            cloud_size: concern_core::analytics::DEFAULT_CLOUD_SIZE,
            exec: Execution::default(),
        }
    }

    pub fn store(&self) -> &Store {
        &self.0.store
    }

    pub fn jobs(&self) -> &JobRunner {
        &self.0.jobs
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/taxonomy", get(taxonomy))
        .route("/api/upload/text", post(upload_text))
        .route("/api/upload/url", post(upload_url))
        .route("/api/upload/file", post(upload_file))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/documents/{id}", get(get_document))
        .route("/api/summary/{job_id}", get(summary))
        .route("/api/interventions/query", post(interventions_query))
        .route("/api/trends", get(trends))
        .route("/api/events/compare", get(events_compare))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

/// Runs blocking work (disk, models) off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    taxonomy_version: String,
    multilabel_model: bool,
    relevance_model: bool,
}

async fn health(State(s): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok",
        taxonomy_version: s.0.taxonomy.version().to_string(),
        multilabel_model: s.0.models.multilabel.is_some(),
        relevance_model: s.0.models.relevance.is_some(),
    })
}

#[derive(Serialize)]
struct NodeView<'a> {
    id: &'a str,
    name: &'a str,
    definition: &'a str,
    parent_id: Option<&'a str>,
}

#[derive(Serialize)]
struct TaxonomyView<'a> {
    version: &'a str,
    nodes: Vec<NodeView<'a>>,
}

async fn taxonomy(State(s): State<AppState>) -> Response {
    let t = &s.0.taxonomy;
    let nodes = t
        .nodes()
        .iter()
        .map(|n| NodeView { id: &n.id, name: &n.name, definition: &n.definition, parent_id: n.parent_id.as_deref() })
        .collect();
    Json(TaxonomyView { version: t.version(), nodes }).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: String,
}

fn accepted(job: Job) -> Response {
    (StatusCode::ACCEPTED, Json(JobAccepted { job_id: job.job_id })).into_response()
}

fn parse_date(raw: Option<&str>) -> ApiResult<Option<NaiveDate>> {
    match raw.map(str::trim).filter(|d| !d.is_empty()) {
        None => Ok(None),
        Some(d) => NaiveDate::parse_from_str(d, "%Y-%m-%d")
            .map(Some)
            .map_err(|_| ApiError::invalid(format!("date `{d}` is not YYYY-MM-DD"))),
    }
}

fn store_err(e: StoreError) -> String {
    format!("storage error: {e}")
}

/// Classifies and saves documents one by one, reporting progress.
fn classify_and_save(state: &AppState, ctx: &JobContext, docs: &[Document]) -> Result<Vec<String>, String> {
    let mut ids = Vec::with_capacity(docs.len());
    for (i, doc) in docs.iter().enumerate() {
        let c = classify_document(doc, &state.0.models, &state.0.taxonomy, state.0.exec).map_err(|e| e.to_string())?;
        c.save(&state.0.store).map_err(store_err)?;
        ids.push(c.doc_id);
        ctx.progress((i + 1) as f64 / docs.len() as f64);
    }
    Ok(ids)
}

#[derive(Debug, Deserialize)]
pub struct TextUpload {
    pub text: String,
    #[serde(default)]
    pub date: Option<String>,
    #[serde(default)]
    pub id: Option<String>,
}

async fn upload_text(State(s): State<AppState>, body: Result<Json<TextUpload>, JsonRejection>) -> ApiResult<Response> {
    let Json(up) = body?;
    if up.text.trim().is_empty() {
        return Err(ApiError::invalid("text is empty"));
    }
    let date = parse_date(up.date.as_deref())?;
    s.0.models.multilabel()?;
    let st = s.clone();
    let job = s
        .0
        .jobs
        .submit(JobKind::Ingest, move |ctx| {
            let meta = DocumentMeta { id: up.id.filter(|i| !i.trim().is_empty()), url: None, date, fetched_at: None };
            let doc = Document::build(SourceKind::Text, up.text, meta, IngestOptions::default()).map_err(|e| e.to_string())?;
            let ids = classify_and_save(&st, ctx, std::slice::from_ref(&doc))?;
            Ok(JobOutput { document_ids: ids, ..Default::default() })
        })
        .map_err(ApiError::internal)?;
    Ok(accepted(job))
}

#[derive(Debug, Deserialize)]
pub struct UrlUpload {
    pub url: String,
    #[serde(default)]
    pub date: Option<String>,
}

async fn upload_url(State(s): State<AppState>, body: Result<Json<UrlUpload>, JsonRejection>) -> ApiResult<Response> {
    let Json(up) = body?;
    check_url(&up.url).map_err(|e| ApiError::invalid(e.to_string()))?;
    let date = parse_date(up.date.as_deref())?;
    s.0.models.multilabel()?;
    let st = s.clone();
    let job = s
        .0
        .jobs
        .submit(JobKind::Ingest, move |ctx| {
            let doc = fetch_document(&up.url, date).map_err(|e| e.to_string())?;
            ctx.progress(0.5);
            let ids = classify_and_save(&st, ctx, std::slice::from_ref(&doc))?;
            Ok(JobOutput { document_ids: ids, result_ref: Some(up.url), ..Default::default() })
        })
        .map_err(ApiError::internal)?;
    Ok(accepted(job))
}

async fn upload_file(State(s): State<AppState>, mut mp: Multipart) -> ApiResult<Response> {
    let mut bytes = None;
    let mut format: Option<FileFormat> = None;
    let mut filename = None;
    while let Some(field) = mp.next_field().await.map_err(|e| ApiError::invalid(e.body_text()))? {
        match field.name() {
            Some("file") => {
                filename = field.file_name().map(str::to_string);
                bytes = Some(field.bytes().await.map_err(|e| ApiError::invalid(e.body_text()))?);
            }
            Some("format") => {
                let v = field.text().await.map_err(|e| ApiError::invalid(e.body_text()))?;
                format = Some(v.parse().map_err(ApiError::invalid)?);
            }
            _ => {}
        }
    }
    let bytes = bytes.ok_or_else(|| ApiError::invalid("multipart field `file` is required"))?;
    let format = match format {
        Some(f) => f,
        None => filename
            .as_deref()
            .and_then(|n| n.rsplit_once('.'))
            .and_then(|(_, ext)| ext.parse().ok())
            .ok_or_else(|| ApiError::invalid("multipart field `format` is required (jsonl, csv or plain)"))?,
    };
    s.0.models.multilabel()?;
    let st = s.clone();
    let job = s
        .0
        .jobs
        .submit(JobKind::Ingest, move |ctx| {
            let blob = st.0.store.put_blob(&bytes).map_err(store_err)?;
            let report = ingest_bytes(&bytes, format, IngestOptions::default()).map_err(|e| e.to_string())?;
            if report.documents.is_empty() {
                return Err(format!("no usable records ({} skipped)", report.skipped.len()));
            }
            let ids = classify_and_save(&st, ctx, &report.documents)?;
            Ok(JobOutput { document_ids: ids, skipped: report.skipped, result_ref: Some(blob) })
        })
        .map_err(ApiError::internal)?;
    Ok(accepted(job))
}

fn load_job(s: &AppState, id: &str) -> ApiResult<Job> {
    s.0.jobs.get(id).map_err(|e| match e {
        StoreError::NotFound { .. } => ApiError::new(StatusCode::NOT_FOUND, "job_not_found", format!("no job `{id}`")),
        other => ApiError::internal(other),
    })
}

async fn get_job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    blocking(move || load_job(&s, &id).map(Json)).await
}

fn load_document(s: &AppState, id: &str) -> ApiResult<ClassifiedDocument> {
    let doc = ClassifiedDocument::load(&s.0.store, id).map_err(|e| match e {
        StoreError::NotFound { .. } => {
            ApiError::new(StatusCode::NOT_FOUND, "document_not_found", format!("no document `{id}`"))
        }
        other => ApiError::internal(other),
    })?;
    if !doc.article_labels_consistent() {
        return Err(ApiError::internal(format!("document `{id}` has article labels that disagree with its passages")));
    }
    Ok(doc)
}

async fn get_document(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ClassifiedDocument>> {
    blocking(move || load_document(&s, &id).map(Json)).await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePassage {
    pub doc_id: String,
    pub passage_id: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcernSummary {
    pub concern_id: String,
    pub name: String,
    pub passage_count: usize,
    pub examples: Vec<ExamplePassage>,
    pub cloud: Vec<CloudEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub job_id: String,
    pub document_ids: Vec<String>,
    /// Only concerns with at least one positive passage, in taxonomy order.
    pub concerns: Vec<ConcernSummary>,
}

#[derive(Debug, Deserialize)]
struct SummaryQuery {
    k: Option<usize>,
}

fn build_summary(s: &AppState, job: &Job, k: usize) -> ApiResult<Summary> {
    let docs: Vec<ClassifiedDocument> =
        job.document_ids.iter().map(|id| load_document(s, id)).collect::<ApiResult<_>>()?;
    let mut concerns = Vec::new();
    for node in s.0.taxonomy.nodes() {
        let mut hits: Vec<ExamplePassage> = Vec::new();
        for d in &docs {
            let Some(col) = d.label_ids.iter().position(|l| *l == node.id) else { continue };
            for p in d.passages.iter().filter(|p| p.labels.contains(&node.id)) {
                hits.push(ExamplePassage {
                    doc_id: d.doc_id.clone(),
                    passage_id: p.passage_id.clone(),
                    start: p.start,
                    end: p.end,
                    text: p.text.clone(),
                    score: p.scores.get(col).copied().unwrap_or(0.0),
                });
            }
        }
        if hits.is_empty() {
            continue;
        }
        let texts: Vec<&str> = hits.iter().map(|h| h.text.as_str()).collect();
        let cloud = keyword_cloud(&node.id, &texts, &s.0.stopwords, k).entries;
        let passage_count = hits.len();
        hits.sort_by(|a, b| {
            b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)).then_with(|| a.start.cmp(&b.start))
        });
        hits.truncate(SUMMARY_EXAMPLES);
        concerns.push(ConcernSummary {
            concern_id: node.id.clone(),
            name: node.name.clone(),
            passage_count,
            examples: hits,
            cloud,
        });
    }
    Ok(Summary { job_id: job.job_id.clone(), document_ids: job.document_ids.clone(), concerns })
}

async fn summary(
    State(s): State<AppState>,
    Path(job_id): Path<String>,
    q: Result<Query<SummaryQuery>, QueryRejection>,
) -> ApiResult<Json<Summary>> {
    let Query(q) = q?;
    let k = q.k.unwrap_or(s.0.cloud_size);
    blocking(move || {
        let job = load_job(&s, &job_id)?;
        match job.state {
            JobState::Done => build_summary(&s, &job, k).map(Json),
            JobState::Failed => Err(ApiError::new(
                StatusCode::CONFLICT,
                "job_failed",
                job.error.unwrap_or_else(|| "job failed".into()),
            )),
            _ => Err(ApiError::new(StatusCode::CONFLICT, "job_not_ready", format!("job `{job_id}` is still running"))),
        }
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct InterventionQuery {
    pub text: String,
    #[serde(default)]
    pub top_k: Option<usize>,
}

async fn interventions_query(
    State(s): State<AppState>,
    body: Result<Json<InterventionQuery>, JsonRejection>,
) -> ApiResult<Json<ClassifiedQuery>> {
    let Json(q) = body?;
    if q.text.trim().is_empty() {
        return Err(ApiError::invalid("text is empty"));
    }
    let top_k = q.top_k.unwrap_or(DEFAULT_TOP_K);
    let model = s.0.models.multilabel()?.clone();
    blocking(move || {
        classify_and_match(&q.text, model.as_ref(), &s.0.taxonomy, &s.0.interventions, top_k).map(Json).map_err(|e| {
            match e {
                InterventionError::ZeroTopK => ApiError::invalid(e.to_string()),
                other => ApiError::internal(other),
            }
        })
    })
    .await
}

/// Dated articles from every stored document, ordered by (date, doc_id).
fn stored_articles(s: &AppState, from: Option<NaiveDate>, to: Option<NaiveDate>) -> ApiResult<Vec<ArticleLabel>> {
    let docs = ClassifiedDocument::load_all(&s.0.store).map_err(ApiError::internal)?;
    let mut arts: Vec<ArticleLabel> = docs
        .iter()
        .filter_map(|d| d.article_label(&s.0.taxonomy))
        .filter(|a| from.is_none_or(|f| a.date >= f) && to.is_none_or(|t| a.date <= t))
        .collect();
    arts.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.doc_id.cmp(&b.doc_id)));
    Ok(arts)
}

fn analytics_err(e: AnalyticsError) -> ApiError {
    match e {
        AnalyticsError::InsufficientData { .. } => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "insufficient_data", e.to_string())
        }
        AnalyticsError::ZeroWindow => ApiError::invalid(e.to_string()),
        other => ApiError::internal(other),
    }
}

#[derive(Debug, Deserialize)]
struct TrendQuery {
    window: Option<usize>,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    format: Option<String>,
    partial: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrendReport {
    pub articles: usize,
    pub series: Vec<TrendSeries>,
}

async fn trends(State(s): State<AppState>, q: Result<Query<TrendQuery>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let csv = match q.format.as_deref() {
        None | Some("json") => false,
        Some("csv") => true,
        Some(other) => return Err(ApiError::invalid(format!("format `{other}` is not json or csv"))),
    };
    let opts = RollingOptions { window: q.window.unwrap_or(DEFAULT_WINDOW), emit_partial: q.partial.unwrap_or(false) };
    blocking(move || {
        let arts = stored_articles(&s, q.from, q.to)?;
        let ids: Vec<String> = s.0.taxonomy.ids().map(str::to_string).collect();
        let series = rolling_average(&arts, &ids, opts, s.0.exec).map_err(analytics_err)?;
        Ok(if csv {
            ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], trends_to_csv(&series)).into_response()
        } else {
            Json(TrendReport { articles: arts.len(), series }).into_response()
        })
    })
    .await
}

#[derive(Debug, Deserialize)]
struct EventQuery {
    date: NaiveDate,
    pre_days: Option<u32>,
    post_days: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EventReport {
    #[serde(flatten)]
    pub comparison: EventComparison,
    /// Human-readable change per concern, e.g. `rose by 61%`.
    pub descriptions: BTreeMap<String, String>,
}

async fn events_compare(
    State(s): State<AppState>,
    q: Result<Query<EventQuery>, QueryRejection>,
) -> ApiResult<Json<EventReport>> {
    let Query(q) = q?;
    let window = EventWindow { event_date: q.date, pre_days: q.pre_days.unwrap_or(30), post_days: q.post_days.unwrap_or(30) };
    blocking(move || {
        let arts = stored_articles(&s, None, None)?;
        let ids: Vec<String> = s.0.taxonomy.ids().map(str::to_string).collect();
        let comparison = event_comparison(&arts, &ids, window).map_err(analytics_err)?;
        let descriptions = comparison.concerns.iter().map(|c| (c.concern_id.clone(), c.describe())).collect();
        Ok(Json(EventReport { comparison, descriptions }))
    })
    .await
}
