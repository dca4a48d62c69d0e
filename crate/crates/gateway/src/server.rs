//! HTTP service over the knowledge graph and diagnosis sessions.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::Router;
use diagnostica_circuit::{ModelRegistry, OscillogramOutcome, PendingAction, Session, SessionState, StartRequest};
use diagnostica_kg::{
    fixtures, shared, triples, ComponentInput, ComponentSetInput, Concept, EntityId, FaultContextInput, KnowledgeGraph,
    Literal, SharedKg,
};
use diagnostica_neural::{CamMethod, Heatmap};
use parking_lot::{Mutex, RwLock};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::api::{ok, ApiError, ApiResult, Reply};
use crate::series_io::parse_series;

pub struct AppState {
    pub kg: SharedKg,
    pub registry: Arc<ModelRegistry>,
    pub kg_path: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AppState {
    pub fn new(kg: KnowledgeGraph, registry: ModelRegistry, kg_path: Option<PathBuf>) -> Arc<Self> {
        Arc::new(AppState { kg: shared(kg), registry: Arc::new(registry), kg_path, sessions: RwLock::default() })
    }

    /// Writes the graph to `kg_path`; returns the path written.
    pub fn checkpoint(&self) -> diagnostica_kg::store::Result<Option<PathBuf>> {
        match &self.kg_path {
            Some(p) => {
                triples::save(&self.kg.read(), p)?;
                Ok(Some(p.clone()))
            }
            None => Ok(None),
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }
}

/// Runs `f` on the session unless another request holds it.
fn with_session<T>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut Session) -> Result<T, ApiError>,
) -> Result<T, ApiError> {
    let session = state.session(id)?;
    let mut guard = session.try_lock().ok_or_else(|| ApiError::conflict(format!("session {id} is busy")))?;
    f(&mut guard)
}

fn json<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/sessions", post(start_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/actions", get(get_actions))
        .route("/sessions/{id}/oscillograms", post(post_oscillogram))
        .route("/sessions/{id}/manual-results", post(post_manual_result))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/report", get(get_report))
        .route("/knowledge/fault-contexts", post(post_fault_context))
        .route("/knowledge/components", post(post_component))
        .route("/knowledge/component-sets", post(post_component_set))
        .route("/kg/stats", get(kg_stats))
        .route("/kg/components", get(kg_components))
        .route("/kg/query/suspects", get(query_suspects))
        .route("/kg/query/symptoms", get(query_symptoms))
        .route("/kg/entities/{id}", get(get_entity))
        .route("/kg/export", get(kg_export))
        .route("/kg/import", post(kg_import))
        .route("/kg/checkpoint", post(kg_checkpoint))
        .route("/heatmaps/{id}", get(get_heatmap))
        .fallback(|| async { ApiError::not_found("no such endpoint") });
    Router::new().nest("/api/v1", api).with_state(state)
}

#[derive(Debug, Serialize)]
struct SessionPayload {
    id: String,
    #[serde(flatten)]
    view: diagnostica_circuit::SessionView,
}

async fn start_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<SessionPayload> {
    let request: StartRequest = json(&body)?;
    let session = Session::start(state.kg.clone(), state.registry.clone(), request)?;
    let id = uuid::Uuid::new_v4().to_string();
    let view = session.view();
    state.sessions.write().insert(id.clone(), Arc::new(Mutex::new(session)));
    tracing::info!(session = %id, state = %view.state, "session started");
    Ok(Reply(StatusCode::CREATED, SessionPayload { id, view }))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SessionPayload> {
    let view = with_session(&state, &id, |s| Ok(s.view()))?;
    Ok(ok(SessionPayload { id, view }))
}

#[derive(Debug, Serialize)]
struct ActionsPayload {
    state: SessionState,
    actions: Vec<PendingAction>,
}

async fn get_actions(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<ActionsPayload> {
    with_session(&state, &id, |s| {
        let actions = s.advance()?;
        Ok(ok(ActionsPayload { state: s.state(), actions }))
    })
}

#[derive(Debug, Deserialize)]
struct OscillogramBody {
    component: String,
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct ComponentQuery {
    component: Option<String>,
}

#[derive(Debug, Serialize)]
struct SubmissionPayload<T> {
    #[serde(flatten)]
    result: T,
    state: SessionState,
    actions: Vec<PendingAction>,
}

#[derive(Debug, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
enum OscillogramResult {
    Classified { record: diagnostica_circuit::ClassificationRecord, heatmap: Option<Heatmap> },
    ConvertedToManual { notice: String },
}

fn is_csv(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("text/csv") || v.starts_with("text/plain"))
}

/// JSON `{component, values}`, or a JSON array / CSV body with `?component=`.
async fn post_oscillogram(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<ComponentQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<SubmissionPayload<OscillogramResult>> {
    let (component, values) = if is_csv(&headers) || body.trim_ascii_start().starts_with(b"[") {
        let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
        let values = parse_series(text).map_err(|e| ApiError::bad_request(format!("{e:#}")))?;
        let component = query.component.ok_or_else(|| ApiError::bad_request("missing ?component="))?;
        (component, values)
    } else {
        let b: OscillogramBody = json(&body)?;
        (b.component, b.values)
    };
    with_session(&state, &id, |s| {
        let result = match s.submit_oscillogram(&component, values)? {
            OscillogramOutcome::Classified { record, heatmap } => OscillogramResult::Classified { record, heatmap },
            OscillogramOutcome::ConvertedToManual { notice } => OscillogramResult::ConvertedToManual { notice },
        };
        let actions = s.advance()?;
        Ok(ok(SubmissionPayload { result, state: s.state(), actions }))
    })
}

#[derive(Debug, Deserialize)]
struct ManualBody {
    #[serde(default)]
    component: Option<String>,
    anomalous: bool,
}

#[derive(Debug, Serialize)]
struct ManualResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    record: Option<diagnostica_circuit::ClassificationRecord>,
}

/// Manual verdict for a component, or without a component the answer to the
/// sensor-malfunction hypothesis (`anomalous` = sensor defective).
async fn post_manual_result(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<SubmissionPayload<ManualResult>> {
    let b: ManualBody = json(&body)?;
    with_session(&state, &id, |s| {
        let result = match &b.component {
            Some(c) => ManualResult { record: Some(s.submit_manual_result(c, b.anomalous)?) },
            None => {
                s.confirm_sensor_hypothesis(b.anomalous)?;
                ManualResult { record: None }
            }
        };
        let actions = s.advance()?;
        Ok(ok(SubmissionPayload { result, state: s.state(), actions }))
    })
}

async fn finalize(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<diagnostica_circuit::SessionReport> {
    let report = with_session(&state, &id, |s| Ok(s.finalize()?))?;
    Ok(ok(report))
}

async fn get_report(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<diagnostica_circuit::SessionReport> {
    with_session(&state, &id, |s| match s.report() {
        Some(r) => Ok(ok(r.clone())),
        None => Err(ApiError::conflict(format!("session {id} has not been finalized"))),
    })
}

#[derive(Debug, Serialize)]
struct Created {
    id: EntityId,
}

async fn post_fault_context(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Created> {
    let input: FaultContextInput = json(&body)?;
    let id = state.kg.write().add_fault_context(&input)?;
    Ok(Reply(StatusCode::CREATED, Created { id }))
}

async fn post_component(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Created> {
    let input: ComponentInput = json(&body)?;
    let id = state.kg.write().add_component(&input)?;
    Ok(Reply(StatusCode::CREATED, Created { id }))
}

async fn post_component_set(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Created> {
    let input: ComponentSetInput = json(&body)?;
    let id = state.kg.write().add_component_set(&input)?;
    Ok(Reply(StatusCode::CREATED, Created { id }))
}

async fn kg_stats(State(state): State<Arc<AppState>>) -> ApiResult<diagnostica_kg::Stats> {
    Ok(ok(state.kg.read().stats()))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ComponentView {
    pub name: String,
    pub use_oscilloscope: bool,
    pub affected_by: Vec<String>,
}

async fn kg_components(State(state): State<Arc<AppState>>) -> ApiResult<Vec<ComponentView>> {
    let kg = state.kg.read();
    let out = kg
        .component_names()
        .into_iter()
        .map(|name| {
            let use_oscilloscope = kg
                .by_key(Concept::SuspectComponent, &name)
                .and_then(|id| kg.entity(id))
                .and_then(|e| e.get("use_oscilloscope"))
                .and_then(Literal::as_bool)
                .unwrap_or(false);
            let affected_by = kg.query_affected_by_name(&name);
            ComponentView { name, use_oscilloscope, affected_by }
        })
        .collect();
    Ok(ok(out))
}

#[derive(Debug, Deserialize)]
struct DtcQuery {
    dtc: Option<String>,
}

fn dtc(q: DtcQuery) -> Result<String, ApiError> {
    q.dtc.filter(|d| !d.is_empty()).ok_or_else(|| ApiError::bad_request("missing ?dtc="))
}

async fn query_suspects(
    State(state): State<Arc<AppState>>,
    Query(q): Query<DtcQuery>,
) -> ApiResult<Vec<diagnostica_kg::Suspect>> {
    let code = dtc(q)?;
    Ok(ok(state.kg.read().query_suspects(&code)))
}

#[derive(Debug, Serialize)]
struct SymptomsPayload {
    dtc: String,
    fault_condition: Option<String>,
    symptoms: Vec<String>,
}

async fn query_symptoms(State(state): State<Arc<AppState>>, Query(q): Query<DtcQuery>) -> ApiResult<SymptomsPayload> {
    let code = dtc(q)?;
    let kg = state.kg.read();
    if kg.by_key(Concept::FaultContext, &code).is_none() {
        return Err(ApiError::not_found(format!("unknown DTC {code}")));
    }
    let payload = SymptomsPayload {
        fault_condition: kg.query_fault_condition_by_dtc(&code),
        symptoms: kg.query_symptoms_by_dtc(&code),
        dtc: code,
    };
    Ok(ok(payload))
}

fn entity_id(raw: &str) -> Result<EntityId, ApiError> {
    raw.parse().map_err(ApiError::bad_request)
}

async fn get_entity(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<serde_json::Value> {
    let id = entity_id(&id)?;
    state.kg.read().entity_json(id).map(ok).ok_or_else(|| ApiError::not_found(format!("no entity {id}")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TriplesPayload {
    pub triples: String,
}

async fn kg_export(State(state): State<Arc<AppState>>) -> ApiResult<TriplesPayload> {
    Ok(ok(TriplesPayload { triples: triples::export_triples(&state.kg.read()) }))
}

/// Replaces the graph with the posted triples (raw text or `{triples}`).
async fn kg_import(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<diagnostica_kg::Stats> {
    let text = if is_csv(&headers) || !body.trim_ascii_start().starts_with(b"{") {
        String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("body is not UTF-8"))?
    } else {
        json::<TriplesPayload>(&body)?.triples
    };
    let imported = triples::import_str(&text)?;
    if state.sessions.read().values().any(|s| s.try_lock().is_none_or(|s| !s.state().is_terminal())) {
        return Err(ApiError::conflict("sessions are still running against the current graph"));
    }
    let mut kg = state.kg.write();
    *kg = imported;
    Ok(ok(kg.stats()))
}

#[derive(Debug, Serialize)]
struct CheckpointPayload {
    path: PathBuf,
    stats: diagnostica_kg::Stats,
}

async fn kg_checkpoint(State(state): State<Arc<AppState>>) -> ApiResult<CheckpointPayload> {
    match state.checkpoint()? {
        Some(path) => Ok(ok(CheckpointPayload { path, stats: state.kg.read().stats() })),
        None => Err(ApiError::conflict("no knowledge-graph file configured")),
    }
}

#[derive(Debug, Serialize)]
struct HeatmapPayload {
    id: EntityId,
    generation_method: String,
    values: Vec<f64>,
}

async fn get_heatmap(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<HeatmapPayload> {
    let id = entity_id(&id)?;
    let kg = state.kg.read();
    let e = kg
        .entity(id)
        .filter(|e| e.concept == Concept::Heatmap)
        .ok_or_else(|| ApiError::not_found(format!("no heatmap {id}")))?;
    let payload = HeatmapPayload {
        id,
        generation_method: e.str("generation_method").unwrap_or_default().to_string(),
        values: e.get("values").and_then(Literal::as_series).unwrap_or_default().to_vec(),
    };
    Ok(ok(payload))
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    pub kg_path: Option<PathBuf>,
    /// Component name and model file.
    pub models: Vec<(String, PathBuf)>,
    pub cam_method: CamMethod,
    /// Seed an empty graph with the four-component causal example.
    pub fixture: bool,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            kg_path: None,
            models: Vec::new(),
            cam_method: CamMethod::GradCam,
            fixture: false,
        }
    }
}

/// Loads the graph and the models named by `config`.
pub fn build_state(config: &ServeConfig) -> anyhow::Result<Arc<AppState>> {
    let mut kg = match &config.kg_path {
        Some(p) if p.exists() => {
            triples::load(p).with_context(|| format!("cannot load knowledge graph {}", p.display()))?
        }
        _ => KnowledgeGraph::new(),
    };
    if config.fixture && kg.is_empty() {
        kg = fixtures::causal_graph();
    }
    let mut registry = ModelRegistry::new();
    for (component, path) in &config.models {
        registry.register_file(component, path, config.cam_method)?;
    }
    Ok(AppState::new(kg, registry, config.kg_path.clone()))
}

/// A running service; `stop` shuts it down and persists the graph.
pub struct Server {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    shutdown: Option<oneshot::Sender<()>>,
    handle: JoinHandle<std::io::Result<()>>,
}

impl Server {
    pub async fn start(state: Arc<AppState>, bind: SocketAddr) -> anyhow::Result<Server> {
        let listener = TcpListener::bind(bind).await.with_context(|| format!("cannot bind {bind}"))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(state.clone());
        let handle = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        tracing::info!(%addr, "listening");
        Ok(Server { addr, state, shutdown: Some(tx), handle })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}/api/v1{path}", self.addr)
    }

    pub async fn stop(mut self) -> anyhow::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.handle.await??;
        if let Some(p) = self.state.checkpoint()? {
            tracing::info!(path = %p.display(), "knowledge graph saved");
        }
        Ok(())
    }
}

/// Serves until Ctrl-C, then persists the graph.
pub async fn serve(config: ServeConfig) -> anyhow::Result<()> {
    let state = build_state(&config)?;
    let server = Server::start(state, config.bind).await?;
    println!("listening on http://{}/api/v1", server.addr);
    tokio::signal::ctrl_c().await?;
    server.stop().await
}
