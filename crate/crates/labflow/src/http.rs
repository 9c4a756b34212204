//! JSON-over-HTTP API.
//!
//! Errors are returned as `{"error": <code>, "message": <text>}` with an
//! optional `"field"` naming the offending input.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use labflow_core::access::Action;
use labflow_core::platform::AssetRef;
use labflow_core::registry::{parse_document, AssetRecord, ContentType};
use labflow_core::workflow::{JobState, WorkflowSpec};
use labflow_core::{Caller, Command, Outcome, PlatformError};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::service::{Hub, ServiceError};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.into(), message: message.into(), field: None }
    }
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "BadCredentials" | "ExpiredToken" | "Unauthenticated" => StatusCode::UNAUTHORIZED,
        "AccessDenied" | "NotOwner" | "NotTeamOwner" => StatusCode::FORBIDDEN,
        "NotFound" => StatusCode::NOT_FOUND,
        c if c.starts_with("Unknown") && c != "UnknownDependency" && c != "UnknownContentType" => StatusCode::NOT_FOUND,
        "DuplicateHost" | "DuplicateUser" | "DuplicateContent" | "DuplicateNode" | "IllegalTransition" | "WorkerBusy"
        | "NotLaunchable" | "InsufficientResources" | "CapacityOverflow" | "HostMismatch" => StatusCode::CONFLICT,
        "StorageFailure" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let code = e.code();
        let field = match &e {
            ServiceError::Platform(p) => p.field().map(String::from),
            ServiceError::InvalidRequest { field, .. } => field.clone(),
            ServiceError::Storage(_) => None,
        };
        Self { status: status_for(code), code: code.into(), message: e.to_string(), field }
    }
}

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        ServiceError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.code, "message": self.message});
        if let Some(field) = self.field {
            body["field"] = Value::String(field);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T = Response> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidRequest", e.to_string()))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn caller(hub: &Hub, headers: &HeaderMap) -> ApiResult<Caller> {
    Ok(hub.caller(bearer(headers))?)
}

fn user(hub: &Hub, headers: &HeaderMap) -> ApiResult<String> {
    match caller(hub, headers)? {
        Caller::User(user) => Ok(user),
        _ => Err(PlatformError::Unauthenticated.into()),
    }
}

/// Launcher and worker endpoints: open unless an agent token is configured.
fn agent(hub: &Hub, headers: &HeaderMap) -> ApiResult<()> {
    match hub.agent_token() {
        None => Ok(()),
        Some(expected) if bearer(headers) == Some(expected) => Ok(()),
        Some(_) => Err(ApiError::new(StatusCode::UNAUTHORIZED, "Unauthenticated", "agent token required")),
    }
}

fn created(body: Value) -> Response {
    (StatusCode::CREATED, Json(body)).into_response()
}

fn ok(body: impl serde::Serialize) -> Response {
    Json(body).into_response()
}

fn no_content() -> Response {
    StatusCode::NO_CONTENT.into_response()
}

fn id(outcome: Outcome) -> String {
    match outcome {
        Outcome::Id(id) => id,
        other => unreachable!("command returned {other:?} instead of an id"),
    }
}

type Shared = State<Arc<Hub>>;

pub fn router(hub: Arc<Hub>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/users", post(create_user))
        .route("/auth/login", post(login))
        .route("/auth/whoami", get(whoami))
        .route("/teams", post(create_team))
        .route("/teams/{id}/members", post(add_member))
        .route("/teams/{id}/members/{user}", axum::routing::delete(remove_member))
        .route("/grants", post(grant).delete(revoke))
        .route("/access", get(check_access))
        .route("/workflows", post(submit_workflow))
        .route("/workflows/{id}", get(get_workflow))
        .route("/workflows/{id}/cancel", post(cancel_workflow))
        .route("/jobs", get(list_jobs))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/logs", get(get_logs).post(append_log))
        .route("/jobs/{id}/status", post(report_status))
        .route("/hosts", post(register_host).get(list_hosts))
        .route("/hosts/{id}/poll", post(poll_host))
        .route("/workers/{id}/next", get(next_job))
        .route("/workers/{id}/done", post(worker_done))
        .route("/contents", post(register_content).get(list_contents))
        .route("/contents/search", get(search_contents))
        .route("/contents/{id}", get(get_content).delete(delete_content))
        .route("/contents/{id}/launch", post(launch_content))
        .route("/assets", post(register_asset).get(list_assets))
        .route("/assets/{id}", get(get_asset).delete(delete_asset))
        .fallback(not_found);

    let mut app = Router::new().nest("/api/v1", api);
    if let Some(dir) = ui_dir {
        let dir = Arc::new(dir);
        let index_dir = dir.clone();
        app = app
            .route("/ui", get(move || serve_static(index_dir.clone(), String::new())))
            .route("/ui/", get({
                let dir = dir.clone();
                move || serve_static(dir.clone(), String::new())
            }))
            .route("/ui/{*path}", get(move |Path(path): Path<String>| serve_static(dir.clone(), path)));
    }
    app.fallback(not_found).with_state(hub)
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

async fn serve_static(root: Arc<PathBuf>, path: String) -> Response {
    let relative = if path.is_empty() { "index.html".to_string() } else { path };
    let rel = FsPath::new(&relative);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return not_found().await.into_response();
    }
    match tokio::fs::read(root.join(rel)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, mime_for(&relative))], bytes).into_response(),
        Err(_) => not_found().await.into_response(),
    }
}

fn mime_for(path: &str) -> &'static str {
    match path.rsplit('.').next() {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

// Users, sessions, teams and grants.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewUser {
    username: String,
    password: String,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
}

async fn create_user(State(hub): Shared, body: Bytes) -> ApiResult {
    let req: NewUser = parse(&body)?;
    hub.register_user(&req.username, &req.password, req.attributes)?;
    Ok(created(json!({"username": req.username})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Login {
    username: String,
    password: String,
}

async fn login(State(hub): Shared, body: Bytes) -> ApiResult {
    let req: Login = parse(&body)?;
    Ok(ok(hub.login(&req.username, &req.password)?))
}

async fn whoami(State(hub): Shared, headers: HeaderMap) -> ApiResult {
    let username = user(&hub, &headers)?;
    Ok(ok(json!({"username": username})))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct NewTeam {
    #[serde(default)]
    attributes: BTreeMap<String, String>,
}

async fn create_team(State(hub): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    let principal = user(&hub, &headers)?;
    let req: NewTeam = if body.is_empty() { NewTeam::default() } else { parse(&body)? };
    let team = id(hub.execute(Command::CreateTeam { principal, attributes: req.attributes })?);
    Ok(created(json!({"team_id": team})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Member {
    user: String,
}

async fn add_member(State(hub): Shared, headers: HeaderMap, Path(team): Path<String>, body: Bytes) -> ApiResult {
    let principal = user(&hub, &headers)?;
    let req: Member = parse(&body)?;
    match hub.execute(Command::AddMember { principal, team, user: req.user })? {
        Outcome::Edge(edge) => Ok(ok(edge)),
        other => unreachable!("{other:?}"),
    }
}

async fn remove_member(State(hub): Shared, headers: HeaderMap, Path((team, member)): Path<(String, String)>) -> ApiResult {
    let principal = user(&hub, &headers)?;
    hub.execute(Command::RemoveMember { principal, team, user: member })?;
    Ok(no_content())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GrantRequest {
    subject: String,
    actions: BTreeSet<Action>,
    resource: String,
}

async fn grant(State(hub): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    let principal = user(&hub, &headers)?;
    let req: GrantRequest = parse(&body)?;
    match hub.execute(Command::Grant { principal, subject: req.subject, actions: req.actions, resource: req.resource })? {
        Outcome::Edge(edge) => Ok(created(serde_json::to_value(edge).expect("edge serializes"))),
        other => unreachable!("{other:?}"),
    }
}

async fn revoke(State(hub): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    let principal = user(&hub, &headers)?;
    let req: GrantRequest = parse(&body)?;
    hub.execute(Command::Revoke { principal, subject: req.subject, actions: req.actions, resource: req.resource })?;
    Ok(no_content())
}

#[derive(Deserialize)]
struct AccessQuery {
    user: String,
    action: String,
    resource: String,
}

async fn check_access(State(hub): Shared, headers: HeaderMap, Query(q): Query<AccessQuery>) -> ApiResult {
    user(&hub, &headers)?;
    let action = Action::parse(&q.action).ok_or_else(|| ServiceError::InvalidRequest {
        message: format!("unknown action {:?}", q.action),
        field: Some("action".into()),
    })?;
    Ok(ok(hub.read(|p| p.check_access(&q.user, action, &q.resource))?))
}

// Workflows and jobs.

async fn submit_workflow(State(hub): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    let principal = user(&hub, &headers)?;
    let spec: WorkflowSpec = parse(&body)?;
    let now = hub.now();
    let workflow_id = id(hub.execute(Command::SubmitWorkflow { principal, spec, now })?);
    Ok(created(json!({"workflow_id": workflow_id})))
}

async fn get_workflow(State(hub): Shared, headers: HeaderMap, Path(workflow): Path<String>) -> ApiResult {
    let caller = caller(&hub, &headers)?;
    Ok(ok(hub.read(|p| p.get_workflow(&caller, &workflow))?))
}

async fn cancel_workflow(State(hub): Shared, headers: HeaderMap, Path(workflow_id): Path<String>) -> ApiResult {
    let principal = user(&hub, &headers)?;
    let now = hub.now();
    let count = match hub.execute(Command::CancelWorkflow { principal, workflow_id: workflow_id.clone(), now })? {
        Outcome::Count(n) => n,
        other => unreachable!("{other:?}"),
    };
    Ok(ok(json!({"workflow_id": workflow_id, "affected_jobs": count})))
}

#[derive(Deserialize)]
struct JobQuery {
    workflow: Option<String>,
    state: Option<String>,
}

fn parse_state(s: &str) -> ApiResult<JobState> {
    JobState::parse(s).ok_or_else(|| {
        ServiceError::InvalidRequest { message: format!("unknown job state {s:?}"), field: Some("state".into()) }.into()
    })
}

async fn list_jobs(State(hub): Shared, headers: HeaderMap, Query(q): Query<JobQuery>) -> ApiResult {
    let caller = caller(&hub, &headers)?;
    let state = q.state.as_deref().filter(|s| !s.is_empty()).map(parse_state).transpose()?;
    let workflow = q.workflow.as_deref().filter(|w| !w.is_empty());
    Ok(hub.read(|p| ok(p.list_jobs(&caller, workflow, state))))
}

async fn get_job(State(hub): Shared, headers: HeaderMap, Path(job): Path<String>) -> ApiResult {
    let caller = caller(&hub, &headers)?;
    hub.read(|p| Ok(ok(p.get_job(&caller, &job)?)))
}

#[derive(Deserialize)]
struct LogQuery {
    #[serde(default)]
    from: usize,
}

async fn get_logs(State(hub): Shared, headers: HeaderMap, Path(job): Path<String>, Query(q): Query<LogQuery>) -> ApiResult {
    let caller = caller(&hub, &headers)?;
    hub.read(|p| {
        let bytes = p.get_logs(&caller, &job, q.from)?;
        let size = p.compute().job(&job).map(|j| j.log_size).unwrap_or(0);
        Ok(ok(json!({
            "job_id": job,
            "from": q.from,
            "next_offset": q.from.min(size) + bytes.len(),
            "size": size,
            "text": String::from_utf8_lossy(bytes),
            "data_b64": B64.encode(bytes),
        })))
    })
}

/// A log chunk given either as text or as base64 bytes.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Chunk {
    text: Option<String>,
    data_b64: Option<String>,
}

impl Chunk {
    fn bytes(self, field: &str) -> ApiResult<Vec<u8>> {
        match (self.text, self.data_b64) {
            (Some(_), Some(_)) => Err(ServiceError::InvalidRequest {
                message: "give either text or data_b64, not both".into(),
                field: Some(field.into()),
            }
            .into()),
            (Some(text), None) => Ok(text.into_bytes()),
            (None, Some(data)) => B64.decode(data).map_err(|e| {
                ServiceError::InvalidRequest { message: format!("bad base64: {e}"), field: Some(field.into()) }.into()
            }),
            (None, None) => Ok(Vec::new()),
        }
    }
}

async fn append_log(State(hub): Shared, headers: HeaderMap, Path(job_id): Path<String>, body: Bytes) -> ApiResult {
    agent(&hub, &headers)?;
    let chunk: Chunk = if body.is_empty() { Chunk::default() } else { parse(&body)? };
    let chunk = chunk.bytes("data_b64")?;
    let offset = match hub.execute(Command::AppendLog { job_id: job_id.clone(), chunk })? {
        Outcome::Offset(n) => n,
        other => unreachable!("{other:?}"),
    };
    let cancel_requested = hub.read(|p| p.compute().job(&job_id).map(|j| j.cancel_requested).unwrap_or(false));
    Ok(ok(json!({"offset": offset, "cancel_requested": cancel_requested})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StatusReport {
    state: JobState,
    #[serde(default)]
    log: Option<String>,
    #[serde(default)]
    log_b64: Option<String>,
    #[serde(default)]
    asset_uris: Vec<AssetRef>,
}

async fn report_status(State(hub): Shared, headers: HeaderMap, Path(job_id): Path<String>, body: Bytes) -> ApiResult {
    agent(&hub, &headers)?;
    let report: StatusReport = parse(&body)?;
    if !report.state.is_terminal() {
        return Err(ServiceError::InvalidRequest {
            message: "state must be COMPLETED, FAILED or CANCELED".into(),
            field: Some("state".into()),
        }
        .into());
    }
    let log = Chunk { text: report.log, data_b64: report.log_b64 }.bytes("log_b64")?;
    let now = hub.now();
    let ids = match hub.execute(Command::ReportStatus { job_id, state: report.state, log, assets: report.asset_uris, now })? {
        Outcome::AssetIds(ids) => ids,
        other => unreachable!("{other:?}"),
    };
    Ok(ok(json!({"asset_ids": ids})))
}

// Hosts and workers.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewHost {
    host_id: String,
    cpu_capacity: u32,
    gpu_capacity: u32,
}

async fn register_host(State(hub): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    agent(&hub, &headers)?;
    let req: NewHost = parse(&body)?;
    match hub.execute(Command::RegisterHost { host_id: req.host_id, cpu_capacity: req.cpu_capacity, gpu_capacity: req.gpu_capacity })? {
        Outcome::Host(host) => Ok(created(serde_json::to_value(host).expect("host serializes"))),
        other => unreachable!("{other:?}"),
    }
}

async fn list_hosts(State(hub): Shared, headers: HeaderMap) -> ApiResult {
    if caller(&hub, &headers)? == Caller::Anonymous {
        agent(&hub, &headers)?;
    }
    Ok(hub.read(|p| ok(p.list_hosts())))
}

async fn poll_host(State(hub): Shared, headers: HeaderMap, Path(host_id): Path<String>) -> ApiResult {
    agent(&hub, &headers)?;
    match hub.execute(Command::PollAllocations { host_id })? {
        Outcome::Assignments(list) => Ok(ok(list)),
        other => unreachable!("{other:?}"),
    }
}

async fn next_job(State(hub): Shared, headers: HeaderMap, Path(worker_id): Path<String>) -> ApiResult {
    agent(&hub, &headers)?;
    let now = hub.now();
    match hub.execute(Command::NextJob { worker_id, now })? {
        Outcome::Next(next) => Ok(ok(next)),
        other => unreachable!("{other:?}"),
    }
}

async fn worker_done(State(hub): Shared, headers: HeaderMap, Path(worker_id): Path<String>) -> ApiResult {
    agent(&hub, &headers)?;
    hub.execute(Command::WorkerDone { worker_id: worker_id.clone() })?;
    Ok(ok(json!({"worker_id": worker_id})))
}

// Contents and assets.

async fn register_content(State(hub): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    let principal = user(&hub, &headers)?;
    let text = std::str::from_utf8(&body).map_err(|e| ServiceError::invalid(e.to_string()))?;
    let document = parse_document(text).map_err(PlatformError::from)?;
    let content_id = id(hub.execute(Command::RegisterContent { principal, document })?);
    Ok(created(json!({"content_id": content_id})))
}

#[derive(Deserialize)]
struct ContentQuery {
    #[serde(rename = "type")]
    content_type: Option<String>,
    owner: Option<String>,
}

fn parse_type(t: Option<&str>) -> ApiResult<Option<ContentType>> {
    t.filter(|t| !t.is_empty())
        .map(|t| ContentType::parse(t).map_err(PlatformError::from))
        .transpose()
        .map_err(ApiError::from)
}

async fn list_contents(State(hub): Shared, headers: HeaderMap, Query(q): Query<ContentQuery>) -> ApiResult {
    let caller = caller(&hub, &headers)?;
    let content_type = parse_type(q.content_type.as_deref())?;
    let owner = q.owner.as_deref().filter(|o| !o.is_empty());
    Ok(hub.read(|p| ok(p.list_contents(&caller, content_type, owner))))
}

#[derive(Deserialize)]
struct SearchQuery {
    #[serde(default)]
    q: String,
    #[serde(rename = "type")]
    content_type: Option<String>,
}

async fn search_contents(State(hub): Shared, headers: HeaderMap, Query(q): Query<SearchQuery>) -> ApiResult {
    let caller = caller(&hub, &headers)?;
    let content_type = parse_type(q.content_type.as_deref())?;
    Ok(hub.read(|p| {
        let hits: Vec<Value> = p
            .search_contents(&caller, &q.q, content_type)
            .into_iter()
            .map(|hit| {
                let doc = p.registry().content(&hit.content_id).expect("hit refers to stored content");
                json!({
                    "content_id": hit.content_id,
                    "score": hit.score,
                    "name": doc.name,
                    "content_type": doc.content_type,
                })
            })
            .collect();
        ok(hits)
    }))
}

async fn get_content(State(hub): Shared, headers: HeaderMap, Path(content_id): Path<String>) -> ApiResult {
    let caller = caller(&hub, &headers)?;
    hub.read(|p| Ok(ok(p.get_content(&caller, &content_id)?)))
}

async fn delete_content(State(hub): Shared, headers: HeaderMap, Path(content_id): Path<String>) -> ApiResult {
    let principal = user(&hub, &headers)?;
    hub.execute(Command::DeleteContent { principal, content_id })?;
    Ok(no_content())
}

async fn launch_content(State(hub): Shared, headers: HeaderMap, Path(content_id): Path<String>) -> ApiResult {
    let principal = user(&hub, &headers)?;
    let now = hub.now();
    let workflow_id = id(hub.execute(Command::LaunchService { principal, content_id, now })?);
    Ok(created(json!({"workflow_id": workflow_id})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAsset {
    kind: String,
    uri: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    #[serde(default)]
    source_job_id: Option<String>,
}

async fn register_asset(State(hub): Shared, headers: HeaderMap, body: Bytes) -> ApiResult {
    let principal = user(&hub, &headers)?;
    let req: NewAsset = parse(&body)?;
    let asset = AssetRecord {
        asset_id: String::new(),
        owner: String::new(),
        kind: req.kind,
        uri: req.uri,
        metadata: req.metadata,
        source_job_id: req.source_job_id,
    };
    let asset_id = id(hub.execute(Command::RegisterAsset { principal, asset })?);
    Ok(created(json!({"asset_id": asset_id})))
}

async fn list_assets(State(hub): Shared, headers: HeaderMap) -> ApiResult {
    let caller = caller(&hub, &headers)?;
    Ok(hub.read(|p| {
        let visible: Vec<_> = p
            .registry()
            .assets()
            .filter(|a| p.get_asset(&caller, &a.asset_id).is_ok())
            .collect();
        ok(visible)
    }))
}

async fn get_asset(State(hub): Shared, headers: HeaderMap, Path(asset_id): Path<String>) -> ApiResult {
    let caller = caller(&hub, &headers)?;
    hub.read(|p| Ok(ok(p.get_asset(&caller, &asset_id)?)))
}

async fn delete_asset(State(hub): Shared, headers: HeaderMap, Path(asset_id): Path<String>) -> ApiResult {
    let principal = user(&hub, &headers)?;
    hub.execute(Command::DeleteAsset { principal, asset_id })?;
    Ok(no_content())
}

/// A server running on a background runtime. Dropping the handle shuts it
/// down.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

/// Binds `addr` and serves `hub` on a dedicated thread.
pub fn spawn_server(hub: Arc<Hub>, addr: &str, ui_dir: Option<PathBuf>) -> std::io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(TcpListener::bind(addr))?;
    let local = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(hub, ui_dir);
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let served = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = served.await {
                tracing::error!(error = %e, "server stopped");
            }
        });
    });
    Ok(ServerHandle { addr: local, shutdown: Some(tx), thread: Some(thread) })
}

/// Serves until the process is interrupted.
pub async fn serve(listener: TcpListener, hub: Arc<Hub>, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    axum::serve(listener, router(hub, ui_dir)).await
}
