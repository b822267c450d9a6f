//! HTTP service over the engine.
//!
//! Every response body is JSON. Failures carry `{code, message, detail}`.
//! POST requests may send an `Idempotency-Key` header: a repeat with the
//! same key and body returns the stored response without running again;
//! the same key with a different request is a 409.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chaintwin_core::analytics::{CentralityMeasure, CentralityReport, CommunityAssignment, StressReport};
use chaintwin_core::feedback::{NewPrediction, ParamId};
use chaintwin_core::graph::{NodeId, Tick, WeightKey};
use chaintwin_core::ingestion::AlertEvent;
use chaintwin_core::kpi::KpiReport;
use chaintwin_core::optimizer::FlowPlan;
use chaintwin_core::simulation::{Scenario, SimTrace};
use chaintwin_core::{LayerKind, SourceKind};
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::watch;

use crate::config::Config;
use crate::engine::{
    BatchReport, CalibrationDoc, Engine, GraphQuery, Page, ParamDoc, PathAlgorithm, PathQuery, PathsDoc, RunRecord,
    RunRequest, SnapshotDoc, StatusDoc, StressQuery, WhatIfDoc, WhatIfRequest,
};
use crate::error::{EngineError, Result};
use crate::stream::{event_lines, IngestQueue, QueueStats, Shared};

/// Largest accepted request body.
pub const MAX_BODY: usize = 64 * 1024 * 1024;
const DEFAULT_LIMIT: usize = 100;
const MAX_LIMIT: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDoc {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    doc: ErrorDoc,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> Self {
        Self {
            status,
            doc: ErrorDoc {
                code: code.into(),
                message: message.into(),
                detail,
            },
        }
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::Malformed(_) => StatusCode::BAD_REQUEST,
            EngineError::NotFound { .. } => StatusCode::NOT_FOUND,
            EngineError::Conflict(_) => StatusCode::CONFLICT,
            EngineError::Invariant { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            EngineError::QueueFull => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let detail = match &e {
            EngineError::NotFound { kind, id } => json!({ "kind": kind, "id": id }),
            EngineError::Invariant { invariant, .. } => json!({ "invariant": invariant }),
            EngineError::Corrupt { line, .. } => json!({ "line": line }),
            _ => Value::Null,
        };
        if status.is_server_error() && status != StatusCode::SERVICE_UNAVAILABLE {
            log::error!("{e}");
        }
        ApiError::new(status, e.code(), e.to_string(), detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.doc)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Query string extractor answering malformed input with an error document.
pub struct Q<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Q<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> ApiResult<Self> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| Q(v))
            .map_err(|e: QueryRejection| EngineError::Malformed(e.body_text()).into())
    }
}

/// Path extractor answering malformed input with an error document.
pub struct P<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned + Send> FromRequestParts<S> for P<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> ApiResult<Self> {
        Path::<T>::from_request_parts(parts, state)
            .await
            .map(|Path(v)| P(v))
            .map_err(|e: PathRejection| EngineError::Malformed(e.body_text()).into())
    }
}

/// JSON body extractor answering malformed input with an error document.
pub struct J<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for J<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> ApiResult<Self> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| J(v))
            .map_err(|e: JsonRejection| EngineError::Malformed(e.body_text()).into())
    }
}

#[derive(Debug)]
enum Cached {
    InFlight(String),
    Done {
        fingerprint: String,
        status: StatusCode,
        body: Bytes,
    },
}

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
    queue: IngestQueue,
    write_token: Option<String>,
    read_token: Option<String>,
    idempotency: Arc<Mutex<HashMap<String, Cached>>>,
    shutdown: watch::Receiver<bool>,
}

impl AppState {
    /// Starts the ingestion consumer. Streams end when `shutdown` turns
    /// true.
    pub fn new(shared: Arc<Shared>, config: &Config, shutdown: watch::Receiver<bool>) -> Self {
        Self {
            queue: IngestQueue::start(shared.clone(), config.queue_bound),
            shared,
            write_token: config.api_token.clone(),
            read_token: config.read_token.clone(),
            idempotency: Arc::default(),
            shutdown,
        }
    }

    pub fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }
}

/// Runs blocking engine work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| EngineError::Internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

async fn read<T: Send + 'static>(
    s: &AppState,
    f: impl FnOnce(&Engine) -> Result<T> + Send + 'static,
) -> ApiResult<Json<T>> {
    let shared = s.shared.clone();
    blocking(move || f(&shared.lock())).await.map(Json)
}

async fn write<T: Send + 'static>(
    s: &AppState,
    f: impl FnOnce(&mut Engine) -> Result<T> + Send + 'static,
) -> ApiResult<Json<T>> {
    let shared = s.shared.clone();
    blocking(move || shared.write(f)).await.map(Json)
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

async fn auth(State(s): State<AppState>, req: Request, next: Next) -> Response {
    let Some(write_token) = &s.write_token else {
        return next.run(req).await;
    };
    let given = bearer(req.headers());
    let reading = matches!(*req.method(), Method::GET | Method::HEAD);
    if given == Some(write_token.as_str()) {
        return next.run(req).await;
    }
    if given.is_some() && given == s.read_token.as_deref() {
        if reading {
            return next.run(req).await;
        }
        return ApiError::new(StatusCode::FORBIDDEN, "forbidden", "token may only read", Value::Null).into_response();
    }
    ApiError::new(
        StatusCode::UNAUTHORIZED,
        "unauthorized",
        "missing or wrong bearer token",
        Value::Null,
    )
    .into_response()
}

fn fingerprint(parts: &Parts, body: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(parts.method.as_str());
    h.update(b" ");
    h.update(parts.uri.to_string());
    h.update(b"\n");
    h.update(body);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn json_response(status: StatusCode, body: Bytes) -> Response {
    let mut r = Response::new(Body::from(body));
    *r.status_mut() = status;
    r.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    r
}

async fn idempotency(State(s): State<AppState>, req: Request, next: Next) -> Response {
    if req.method() != Method::POST {
        return next.run(req).await;
    }
    let Some(key) = req
        .headers()
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
    else {
        return next.run(req).await;
    };
    let (parts, body) = req.into_parts();
    let bytes = match to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return ApiError::from(EngineError::Malformed(format!("reading body: {e}"))).into_response(),
    };
    let fp = fingerprint(&parts, &bytes);
    {
        let mut cache = s.idempotency.lock().unwrap_or_else(|p| p.into_inner());
        match cache.get(&key) {
            Some(Cached::Done {
                fingerprint,
                status,
                body,
            }) if *fingerprint == fp => {
                let mut r = json_response(*status, body.clone());
                r.headers_mut()
                    .insert("idempotent-replay", HeaderValue::from_static("true"));
                return r;
            }
            Some(Cached::Done { .. }) | Some(Cached::InFlight(_)) => {
                let busy = matches!(cache.get(&key), Some(Cached::InFlight(f)) if *f == fp);
                let message = if busy {
                    "a request with this idempotency key is still running"
                } else {
                    "idempotency key was used with a different request"
                };
                return ApiError::new(
                    StatusCode::CONFLICT,
                    "idempotency_conflict",
                    message,
                    json!({ "key": key }),
                )
                .into_response();
            }
            None => {
                cache.insert(key.clone(), Cached::InFlight(fp.clone()));
            }
        }
    }
    let response = next.run(Request::from_parts(parts, Body::from(bytes))).await;
    let (rp, rb) = response.into_parts();
    let body = to_bytes(rb, usize::MAX).await.unwrap_or_default();
    let mut cache = s.idempotency.lock().unwrap_or_else(|p| p.into_inner());
    if rp.status.is_server_error() {
        cache.remove(&key);
    } else {
        cache.insert(
            key,
            Cached::Done {
                fingerprint: fp,
                status: rp.status,
                body: body.clone(),
            },
        );
    }
    Response::from_parts(rp, Body::from(body))
}

#[derive(Debug, Serialize)]
pub struct ServiceStatus {
    pub engine: StatusDoc,
    pub queue: QueueStats,
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn status(State(s): State<AppState>) -> ApiResult<Json<ServiceStatus>> {
    let queue = s.queue.stats();
    let Json(engine) = read(&s, |e| Ok(e.status())).await?;
    Ok(Json(ServiceStatus { engine, queue }))
}

#[derive(Debug, Deserialize)]
struct TickQuery {
    tick: Option<Tick>,
}

async fn snapshot(State(s): State<AppState>, Q(q): Q<TickQuery>) -> ApiResult<Json<SnapshotDoc>> {
    read(&s, move |e| Ok(e.snapshot_doc(q.tick))).await
}

#[derive(Debug, Deserialize)]
struct KpiQuery {
    run: Option<String>,
    from: Option<Tick>,
    to: Option<Tick>,
}

async fn kpis(State(s): State<AppState>, Q(q): Q<KpiQuery>) -> ApiResult<Json<KpiReport>> {
    read(&s, move |e| e.kpis(q.run.as_deref(), q.from, q.to)).await
}

#[derive(Debug, Deserialize)]
struct SeriesQuery {
    run: Option<String>,
    stride: Tick,
}

/// A complete list, wrapped so it can grow fields later.
#[derive(Debug, Serialize)]
pub struct Items<T> {
    pub items: Vec<T>,
}

async fn kpi_series(State(s): State<AppState>, Q(q): Q<SeriesQuery>) -> ApiResult<Json<Items<KpiReport>>> {
    read(&s, move |e| {
        e.kpi_series(q.run.as_deref(), q.stride).map(|items| Items { items })
    })
    .await
}

#[derive(Debug, Deserialize)]
struct SinceQuery {
    #[serde(default)]
    since: u64,
    limit: Option<usize>,
}

fn limit(l: Option<usize>) -> usize {
    l.unwrap_or(DEFAULT_LIMIT).clamp(1, MAX_LIMIT)
}

async fn alerts(State(s): State<AppState>, Q(q): Q<SinceQuery>) -> ApiResult<Json<Page<AlertEvent>>> {
    read(&s, move |e| Ok(e.alerts_since(q.since, limit(q.limit)))).await
}

/// Server-sent events, one per alert, with the alert id as event id. A
/// reconnecting client resumes after `Last-Event-ID` or `since`.
async fn alert_stream(
    State(s): State<AppState>,
    headers: HeaderMap,
    Q(q): Q<SinceQuery>,
) -> Sse<impl Stream<Item = std::result::Result<Event, Infallible>>> {
    let start = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok()?.parse().ok())
        .unwrap_or(q.since);
    let init = (
        start,
        s.shared.subscribe(),
        s.shutdown.clone(),
        VecDeque::<AlertEvent>::new(),
    );
    let shared = s.shared.clone();
    let stream = futures::stream::unfold(init, move |(mut cursor, mut rx, mut stop, mut buf)| {
        let shared = shared.clone();
        async move {
            loop {
                if *stop.borrow() {
                    return None;
                }
                if let Some(a) = buf.pop_front() {
                    cursor = a.id;
                    let event = Event::default()
                        .id(a.id.to_string())
                        .event("alert")
                        .json_data(&a)
                        .expect("alerts serialize");
                    return Some((Ok(event), (cursor, rx, stop, buf)));
                }
                let sh = shared.clone();
                let page = tokio::task::spawn_blocking(move || sh.lock().alerts_since(cursor, DEFAULT_LIMIT).items)
                    .await
                    .unwrap_or_default();
                if !page.is_empty() {
                    buf.extend(page);
                    continue;
                }
                tokio::select! {
                    changed = rx.changed() => if changed.is_err() { return None },
                    _ = stop.changed() => return None,
                }
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}

async fn ack_alert(State(s): State<AppState>, P(id): P<u64>) -> ApiResult<Json<AlertEvent>> {
    write(&s, move |e| e.acknowledge_alert(id)).await
}

#[derive(Debug, Deserialize)]
struct SourceQuery {
    source: Option<SourceKind>,
}

async fn post_events(
    State(s): State<AppState>,
    Q(q): Q<SourceQuery>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<BatchReport>)> {
    let text = std::str::from_utf8(&body).map_err(|e| EngineError::Malformed(format!("body is not UTF-8: {e}")))?;
    let lines = event_lines(text);
    let report = s.queue.ingest(q.source.unwrap_or(SourceKind::Iot), lines).await?;
    Ok((StatusCode::ACCEPTED, Json(report)))
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    #[serde(default)]
    offset: u64,
    limit: Option<usize>,
}

fn page<T: Clone>(all: impl Iterator<Item = T>, q: &PageQuery) -> Page<T> {
    let n = limit(q.limit);
    let mut items: Vec<T> = all.skip(q.offset as usize).take(n + 1).collect();
    let more = items.len() > n;
    items.truncate(n);
    Page {
        next: more.then_some(q.offset + n as u64),
        items,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub id: String,
    pub scenario: Scenario,
}

async fn post_scenario(State(s): State<AppState>, J(scenario): J<Scenario>) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(id) = write(&s, move |e| e.register_scenario(scenario)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn list_scenarios(State(s): State<AppState>, Q(q): Q<PageQuery>) -> ApiResult<Json<Page<ScenarioEntry>>> {
    read(&s, move |e| {
        Ok(page(
            e.scenarios().map(|(id, sc)| ScenarioEntry {
                id: id.clone(),
                scenario: sc.clone(),
            }),
            &q,
        ))
    })
    .await
}

async fn get_scenario(State(s): State<AppState>, P(id): P<String>) -> ApiResult<Json<Scenario>> {
    read(&s, move |e| e.scenario(&id).cloned()).await
}

/// Runs within the synchronous budget finish before the response (201);
/// larger ones continue in the background (202) and are polled by id.
async fn post_run(State(s): State<AppState>, J(req): J<RunRequest>) -> ApiResult<(StatusCode, Json<RunRecord>)> {
    let shared = s.shared.clone();
    blocking(move || {
        let (job, sync) = shared.write(|e| {
            let sync = e.fits_sync_budget(req.horizon, req.snapshot_tick);
            e.prepare_run(req).map(|job| (job, sync))
        })?;
        if sync {
            let out = job.execute();
            let record = shared.write(|e| e.finish_run(&job, out))?;
            return Ok((StatusCode::CREATED, record));
        }
        let record = shared.lock().run_record(&job.id)?.clone();
        let bg = shared.clone();
        std::thread::spawn(move || {
            let out = job.execute();
            if let Err(e) = bg.write(|e| e.finish_run(&job, out)) {
                log::error!("storing run {} failed: {e}", job.id);
            }
        });
        Ok((StatusCode::ACCEPTED, record))
    })
    .await
    .map(|(code, r)| (code, Json(r)))
}

async fn list_runs(State(s): State<AppState>, Q(q): Q<PageQuery>) -> ApiResult<Json<Page<RunRecord>>> {
    read(&s, move |e| Ok(page(e.runs().cloned(), &q))).await
}

async fn get_run(State(s): State<AppState>, P(id): P<String>) -> ApiResult<Json<RunRecord>> {
    read(&s, move |e| e.run_record(&id).cloned()).await
}

async fn get_run_trace(State(s): State<AppState>, P(id): P<String>) -> ApiResult<Json<SimTrace>> {
    read(&s, move |e| e.run_trace(&id)).await
}

async fn get_run_plan(State(s): State<AppState>, P(id): P<String>) -> ApiResult<Json<FlowPlan>> {
    read(&s, move |e| e.run_plan(&id)).await
}

async fn post_whatif(State(s): State<AppState>, J(req): J<WhatIfRequest>) -> ApiResult<Json<WhatIfDoc>> {
    read(&s, move |e| e.whatif(&req)).await
}

#[derive(Debug, Deserialize)]
struct CentralityQuery {
    tick: Option<Tick>,
    layer: Option<LayerKind>,
    measure: Option<String>,
    top_k: Option<usize>,
}

async fn analytics_centrality(
    State(s): State<AppState>,
    Q(q): Q<CentralityQuery>,
) -> ApiResult<Json<CentralityReport>> {
    let measure: CentralityMeasure = q
        .measure
        .as_deref()
        .unwrap_or("betweenness")
        .parse()
        .map_err(EngineError::from)?;
    let g = GraphQuery {
        tick: q.tick,
        layer: q.layer,
    };
    read(&s, move |e| Ok(e.centrality(&g, measure, q.top_k))).await
}

async fn analytics_communities(State(s): State<AppState>, Q(q): Q<GraphQuery>) -> ApiResult<Json<CommunityAssignment>> {
    read(&s, move |e| e.communities(&q)).await
}

#[derive(Debug, Deserialize)]
struct PathsQuery {
    tick: Option<Tick>,
    layer: Option<LayerKind>,
    #[serde(default)]
    algorithm: PathAlgorithm,
    src: Option<NodeId>,
    dst: Option<NodeId>,
    weight: Option<String>,
}

async fn analytics_paths(State(s): State<AppState>, Q(q): Q<PathsQuery>) -> ApiResult<Json<PathsDoc>> {
    let weight: WeightKey = q
        .weight
        .as_deref()
        .unwrap_or("cost")
        .parse()
        .map_err(EngineError::Malformed)?;
    let g = GraphQuery {
        tick: q.tick,
        layer: q.layer,
    };
    let p = PathQuery {
        algorithm: q.algorithm,
        src: q.src,
        dst: q.dst,
        weight,
    };
    read(&s, move |e| e.paths(&g, &p)).await
}

#[derive(Debug, Deserialize)]
struct StressParams {
    tick: Option<Tick>,
    layer: Option<LayerKind>,
    scenario: String,
    horizon: Tick,
    #[serde(default)]
    seed: u64,
    /// Comma-separated node ids.
    nodes: Option<String>,
    /// Comma-separated edge ids.
    edges: Option<String>,
}

fn id_list<T: for<'a> From<&'a str>>(s: Option<&str>) -> Vec<T> {
    s.map(|s| {
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(T::from)
            .collect()
    })
    .unwrap_or_default()
}

async fn analytics_stress(State(s): State<AppState>, Q(q): Q<StressParams>) -> ApiResult<Json<StressReport>> {
    let g = GraphQuery {
        tick: q.tick,
        layer: q.layer,
    };
    let sq = StressQuery {
        nodes: id_list(q.nodes.as_deref()),
        edges: id_list(q.edges.as_deref()),
        scenario: q.scenario,
        horizon: q.horizon,
        seed: q.seed,
    };
    read(&s, move |e| e.stress(&g, &sq)).await
}

async fn calibration(State(s): State<AppState>) -> ApiResult<Json<CalibrationDoc>> {
    read(&s, |e| Ok(e.calibration_doc())).await
}

fn param_id(id: &str) -> Result<ParamId> {
    let (subject, measure) = id
        .rsplit_once('/')
        .ok_or_else(|| EngineError::Malformed(format!("parameter id `{id}` is not `subject/measure`")))?;
    Ok(ParamId::new(subject, measure))
}

async fn ack_param(State(s): State<AppState>, P(id): P<String>) -> ApiResult<Json<ParamDoc>> {
    let id = param_id(&id)?;
    write(&s, move |e| e.acknowledge_param(id)).await
}

async fn ack_param_split(
    State(s): State<AppState>,
    P((subject, measure)): P<(String, String)>,
) -> ApiResult<Json<ParamDoc>> {
    write(&s, move |e| e.acknowledge_param(ParamId::new(&subject, &measure))).await
}

async fn post_prediction(State(s): State<AppState>, J(p): J<NewPrediction>) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(id) = write(&s, move |e| e.record_prediction(p)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint", Value::Null)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/snapshot", get(snapshot))
        .route("/kpis", get(kpis))
        .route("/kpis/series", get(kpi_series))
        .route("/alerts", get(alerts))
        .route("/alerts/stream", get(alert_stream))
        .route("/alerts/{id}/ack", post(ack_alert))
        .route("/events", post(post_events))
        .route("/scenarios", post(post_scenario).get(list_scenarios))
        .route("/scenarios/{id}", get(get_scenario))
        .route("/runs", post(post_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/trace", get(get_run_trace))
        .route("/runs/{id}/plan", get(get_run_plan))
        .route("/whatif", post(post_whatif))
        .route("/analytics/centrality", get(analytics_centrality))
        .route("/analytics/communities", get(analytics_communities))
        .route("/analytics/paths", get(analytics_paths))
        .route("/analytics/stress", get(analytics_stress))
        .route("/calibration", get(calibration))
        .route("/calibration/{id}/ack", post(ack_param))
        .route("/calibration/{subject}/{measure}/ack", post(ack_param_split))
        .route("/predictions", post(post_prediction))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .route("/health", get(health))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state)
}

async fn shutdown_signal(stop: watch::Sender<bool>) {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
    let _ = stop.send(true);
}

/// Opens the data directory and serves until interrupted.
pub async fn serve(config: Config) -> Result<()> {
    let engine = Engine::open(config.clone())?;
    let shared = Shared::new(engine);
    let (stop, stopped) = watch::channel(false);
    let state = AppState::new(shared, &config, stopped);
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|e| EngineError::io(format!("binding {}", config.bind), e))?;
    let addr = listener
        .local_addr()
        .map_err(|e| EngineError::io("reading bound address", e))?;
    eprintln!("chaintwin serving {} on http://{addr}", config.data_dir.display());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal(stop))
        .await
        .map_err(|e| EngineError::io("serving", e))
}
