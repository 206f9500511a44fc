//! REST + server-sent-events interface. Nodes and edges are addressed as
//! `{workflow}:{id}` because their ids are unique only within a workflow.
//!
//! There is no authentication; deployments wrap the router returned by
//! [`router`] in their own tower layer before serving it.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::Router;
use futures::stream::Stream;
use infomorph_core::content::PlanPatch;
use infomorph_core::graph::{Config, EdgeId, ExecEvent, ExecutionReport, NodeId, NodeKind, WorkflowGraph};
use infomorph_core::hash::canonical_bytes;
use infomorph_core::morph::{parse_transcript, SourceTriage};
use infomorph_core::provider::ChatTurn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{oneshot, watch};

use crate::engine::{Engine, RunOptions};
use crate::error::{ErrorBody, ServiceError};

pub const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
    executions: Arc<Mutex<HashMap<String, Arc<Execution>>>>,
    counter: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>) -> Self {
        Self { engine, executions: Arc::default(), counter: Arc::new(AtomicU64::new(0)) }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }
}

struct Execution {
    workflow: String,
    events: Mutex<Vec<ExecEvent>>,
    outcome: Mutex<Option<Result<ExecutionReport, ErrorBody>>>,
    changed: watch::Sender<u64>,
}

impl Execution {
    fn push(&self, event: &ExecEvent) {
        self.events.lock().unwrap_or_else(|p| p.into_inner()).push(event.clone());
        self.changed.send_modify(|n| *n += 1);
    }

    fn finish(&self, outcome: Result<ExecutionReport, ErrorBody>) {
        *self.outcome.lock().unwrap_or_else(|p| p.into_inner()) = Some(outcome);
        self.changed.send_modify(|n| *n += 1);
    }

    fn snapshot(&self, from: usize) -> (Vec<ExecEvent>, Option<Result<ExecutionReport, ErrorBody>>) {
        let events = self.events.lock().unwrap_or_else(|p| p.into_inner())[from..].to_vec();
        let outcome = self.outcome.lock().unwrap_or_else(|p| p.into_inner()).clone();
        (events, outcome)
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, canonical(&json!({ "error": self.body() }))).into_response()
    }
}

/// Canonical JSON body (sorted keys, no insignificant whitespace).
struct Canonical(Vec<u8>);

impl IntoResponse for Canonical {
    fn into_response(self) -> Response {
        ([(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], self.0).into_response()
    }
}

fn canonical<T: Serialize>(value: &T) -> Canonical {
    Canonical(canonical_bytes(value).expect("response serializes"))
}

type ApiResult = Result<Response, ServiceError>;

fn ok<T: Serialize>(value: &T) -> ApiResult {
    Ok(canonical(value).into_response())
}

fn created<T: Serialize>(value: &T) -> ApiResult {
    Ok((StatusCode::CREATED, canonical(value)).into_response())
}

/// Parses a JSON body, reporting the path of the first bad field.
fn body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ServiceError> {
    let bytes = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { bytes };
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { path };
        ServiceError::validation(path, e.inner().to_string())
    })
}

async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, ServiceError> + Send + 'static,
{
    let engine = state.engine.clone();
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ServiceError::Io(format!("worker failed: {e}")))?
}

/// Splits `{workflow}:{id}`.
fn split_ref(what: &'static str, r: &str) -> Result<(String, u64), ServiceError> {
    let (wf, id) = r.rsplit_once(':').ok_or_else(|| ServiceError::not_found(what, r))?;
    let id = id.parse::<u64>().map_err(|_| ServiceError::not_found(what, r))?;
    Ok((wf.to_string(), id))
}

fn node_ref(r: &str) -> Result<(String, NodeId), ServiceError> {
    split_ref("node", r).map(|(w, n)| (w, NodeId(n)))
}

fn edge_ref(r: &str) -> Result<(String, EdgeId), ServiceError> {
    split_ref("edge", r).map(|(w, e)| (w, EdgeId(e)))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/workflows", post(create_workflow).get(list_workflows))
        .route("/workflows/{id}", get(get_workflow).put(put_workflow))
        .route("/workflows/{id}/nodes", post(add_node))
        .route("/workflows/{id}/execute", post(execute))
        .route("/nodes/{node}/config", put(update_config))
        .route("/nodes/{node}/approve", post(approve))
        .route("/nodes/{node}/patch", post(patch))
        .route("/nodes/{node}/output", get(node_output))
        .route("/edges", post(connect))
        .route("/edges/{edge}", delete(disconnect))
        .route("/executions/{id}", get(execution_status))
        .route("/executions/{id}/events", get(execution_events))
        .route("/documents", post(ingest).get(list_documents))
        .route("/documents/{id}", get(get_document))
        .route("/documents/{id}/pages/{n}", get(get_page))
        .route("/documents/{id}/chat", post(chat))
        .route("/triage", post(triage))
        .route("/synthesize", post(synthesize))
        .route("/artifacts/{hash}", get(artifact))
        .fallback(|| async { ServiceError::not_found("route", "") })
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

// ---- workflows ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateWorkflow {
    #[serde(default)]
    title: String,
    #[serde(default)]
    workflow: Option<Value>,
}

async fn create_workflow(State(s): State<AppState>, bytes: Bytes) -> ApiResult {
    let req: CreateWorkflow = body(&bytes)?;
    let graph = match req.workflow {
        Some(v) => infomorph_core::store::workflow_file::from_bytes(&serde_json::to_vec(&v).expect("value serializes"))
            .map_err(|e| prefix_path(e.into(), "workflow"))?,
        None => WorkflowGraph::new(req.title),
    };
    let (id, graph) = blocking(&s, move |e| Ok((e.create_workflow(graph.clone())?, graph))).await?;
    created(&json!({ "id": id, "workflow": graph }))
}

fn prefix_path(e: ServiceError, prefix: &str) -> ServiceError {
    match e {
        ServiceError::Validation { path, message } => {
            let path = if path == "$" { prefix.to_string() } else { format!("{prefix}.{path}") };
            ServiceError::Validation { path, message }
        }
        other => other,
    }
}

async fn list_workflows(State(s): State<AppState>) -> ApiResult {
    let ids = blocking(&s, |e| e.workflow_ids()).await?;
    ok(&json!({ "workflows": ids }))
}

async fn get_workflow(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let bytes = blocking(&s, move |e| e.workflow_bytes(&id)).await?;
    Ok(Canonical(bytes).into_response())
}

async fn put_workflow(State(s): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let graph = blocking(&s, move |e| e.put_workflow(&id, &bytes)).await?;
    ok(&graph)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AddNode {
    kind: NodeKind,
    #[serde(default)]
    config: Config,
    #[serde(default)]
    layout: Option<Value>,
}

async fn add_node(State(s): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let req: AddNode = body(&bytes)?;
    let (wf, node) = blocking(&s, move |e| {
        let n = e.add_node(&id, req.kind, req.config, req.layout)?;
        let node = e.workflow(&id)?.nodes[&n].clone();
        Ok((id, node))
    })
    .await?;
    created(&json!({ "node_id": node.id, "ref": format!("{wf}:{}", node.id), "node": node }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateConfig {
    config: Config,
}

async fn update_config(State(s): State<AppState>, Path(r): Path<String>, bytes: Bytes) -> ApiResult {
    let (wf, node) = node_ref(&r)?;
    let req: UpdateConfig = body(&bytes)?;
    let d = blocking(&s, move |e| e.update_config(&wf, node, req.config)).await?;
    ok(&d)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Approve {
    #[serde(default = "yes")]
    approved: bool,
}

fn yes() -> bool {
    true
}

async fn approve(State(s): State<AppState>, Path(r): Path<String>, bytes: Bytes) -> ApiResult {
    let (wf, node) = node_ref(&r)?;
    let req: Approve = body(&bytes)?;
    let (d, n) = blocking(&s, move |e| {
        let d = e.set_approval(&wf, node, req.approved)?;
        Ok((d, e.workflow(&wf)?.nodes[&node].clone()))
    })
    .await?;
    ok(&json!({ "node": n, "dirtied": d.dirtied, "warning": d.warning }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchRequest {
    ops: PlanPatch,
}

async fn patch(State(s): State<AppState>, Path(r): Path<String>, bytes: Bytes) -> ApiResult {
    let (wf, node) = node_ref(&r)?;
    let req: PatchRequest = body(&bytes)?;
    let (plan, d) = blocking(&s, move |e| e.patch_viewer(&wf, node, req.ops)).await?;
    ok(&json!({ "plan": plan, "dirtied": d.dirtied }))
}

async fn node_output(State(s): State<AppState>, Path(r): Path<String>) -> ApiResult {
    let (wf, node) = node_ref(&r)?;
    let out = blocking(&s, move |e| e.node_output(&wf, node)).await?;
    ok(&out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Connect {
    workflow: String,
    from: NodeId,
    to: NodeId,
    #[serde(default)]
    port: usize,
}

async fn connect(State(s): State<AppState>, bytes: Bytes) -> ApiResult {
    let req: Connect = body(&bytes)?;
    let wf = req.workflow.clone();
    let (edge, d) = blocking(&s, move |e| e.connect(&req.workflow, req.from, req.to, req.port)).await?;
    created(&json!({ "edge_id": edge, "ref": format!("{wf}:{edge}"), "dirtied": d.dirtied }))
}

async fn disconnect(State(s): State<AppState>, Path(r): Path<String>) -> ApiResult {
    let (wf, edge) = edge_ref(&r)?;
    let d = blocking(&s, move |e| e.disconnect(&wf, edge)).await?;
    ok(&d)
}

// ---- execution ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExecuteRequest {
    #[serde(default)]
    node: Option<NodeId>,
    #[serde(default)]
    full: bool,
}

/// Starts an execution and answers once it is known to have started (its
/// first event) or finished. Graph-level errors are returned directly and
/// leave no execution behind.
async fn execute(State(s): State<AppState>, Path(wf): Path<String>, bytes: Bytes) -> ApiResult {
    let req: ExecuteRequest = body(&bytes)?;
    let n = s.counter.fetch_add(1, Ordering::SeqCst) + 1;
    let exec_id = format!("exec-{n}");
    let record = Arc::new(Execution {
        workflow: wf.clone(),
        events: Mutex::new(Vec::new()),
        outcome: Mutex::new(None),
        changed: watch::channel(0).0,
    });
    let (tx, rx) = oneshot::channel::<Result<(), ServiceError>>();
    let engine = s.engine.clone();
    let rec = record.clone();
    let opts = RunOptions { target: req.node, full: req.full };
    tokio::task::spawn_blocking(move || {
        let mut tx = Some(tx);
        let guard = match engine.begin(&wf) {
            Ok(g) => g,
            Err(e) => {
                let _ = tx.take().expect("unsent").send(Err(e));
                return;
            }
        };
        let result = guard.run(&opts, &mut |ev| {
            rec.push(ev);
            if let Some(t) = tx.take() {
                let _ = t.send(Ok(()));
            }
        });
        drop(guard);
        match result {
            Ok(report) => {
                if let Some(t) = tx.take() {
                    let _ = t.send(Ok(()));
                }
                rec.finish(Ok(report));
            }
            Err(e) => {
                let body = e.body();
                match tx.take() {
                    Some(t) => {
                        let _ = t.send(Err(e));
                    }
                    None => rec.finish(Err(body)),
                }
            }
        }
    });
    rx.await.map_err(|_| ServiceError::Io("execution worker stopped".into()))??;
    s.executions.lock().unwrap_or_else(|p| p.into_inner()).insert(exec_id.clone(), record.clone());
    let out = json!({
        "execution_id": exec_id,
        "workflow": record.workflow,
        "events": format!("/executions/{exec_id}/events"),
    });
    Ok((StatusCode::ACCEPTED, canonical(&out)).into_response())
}

fn execution(s: &AppState, id: &str) -> Result<Arc<Execution>, ServiceError> {
    s.executions
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .get(id)
        .cloned()
        .ok_or_else(|| ServiceError::not_found("execution", id))
}

async fn execution_status(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let rec = execution(&s, &id)?;
    let (events, outcome) = rec.snapshot(0);
    let (status, report, error) = match outcome {
        None => ("running", None, None),
        Some(Ok(r)) => ("done", Some(r), None),
        Some(Err(e)) => ("failed", None, Some(e)),
    };
    ok(&json!({
        "id": id,
        "workflow": rec.workflow,
        "status": status,
        "events": events.len(),
        "report": report,
        "error": error,
    }))
}

fn event_name(ev: &ExecEvent) -> String {
    let v = serde_json::to_value(ev).expect("event serializes");
    v["event"].as_str().unwrap_or("event").to_string()
}

struct Cursor {
    rec: Arc<Execution>,
    rx: watch::Receiver<u64>,
    next: usize,
    pending: std::collections::VecDeque<Event>,
    finished: bool,
}

/// Replays recorded events, then follows the execution live. The stream
/// ends with a `report` (or `error`) event.
async fn execution_events(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ServiceError> {
    let rec = execution(&s, &id)?;
    let rx = rec.changed.subscribe();
    let cursor = Cursor { rec, rx, next: 0, pending: Default::default(), finished: false };
    let stream = futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(ev) = c.pending.pop_front() {
                return Some((Ok(ev), c));
            }
            if c.finished {
                return None;
            }
            c.rx.borrow_and_update();
            let (events, outcome) = c.rec.snapshot(c.next);
            for ev in events {
                let data = String::from_utf8(canonical_bytes(&ev).expect("event serializes")).expect("utf-8");
                c.pending.push_back(Event::default().id(c.next.to_string()).event(event_name(&ev)).data(data));
                c.next += 1;
            }
            if !c.pending.is_empty() {
                continue;
            }
            match outcome {
                Some(Ok(report)) => {
                    let data = String::from_utf8(canonical_bytes(&report).expect("report serializes")).expect("utf-8");
                    c.pending.push_back(Event::default().event("report").data(data));
                    c.finished = true;
                }
                Some(Err(err)) => {
                    let data = String::from_utf8(canonical_bytes(&err).expect("error serializes")).expect("utf-8");
                    c.pending.push_back(Event::default().event("error").data(data));
                    c.finished = true;
                }
                None => {
                    if c.rx.changed().await.is_err() {
                        c.finished = true;
                    }
                }
            }
        }
    });
    Ok(Sse::new(stream))
}

// ---- documents ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestUrl {
    url: String,
}

async fn ingest(State(s): State<AppState>, req: Request) -> ApiResult {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let manifest = if is_multipart {
        let mut form = Multipart::from_request(req, &s)
            .await
            .map_err(|e| ServiceError::validation("$", e.body_text()))?;
        let mut upload = None;
        while let Some(field) = form.next_field().await.map_err(|e| ServiceError::validation("$", e.body_text()))? {
            let Some(name) = field.file_name().map(str::to_string) else { continue };
            let data = field.bytes().await.map_err(|e| ServiceError::validation("file", e.body_text()))?;
            upload = Some((name, data));
            break;
        }
        let (name, data) = upload.ok_or_else(|| ServiceError::validation("file", "multipart body has no file field"))?;
        blocking(&s, move |e| e.ingest_upload(&name, &data)).await?
    } else {
        let bytes = Bytes::from_request(req, &s).await.map_err(|e| ServiceError::validation("$", e.body_text()))?;
        let req: IngestUrl = body(&bytes)?;
        blocking(&s, move |e| e.ingest_url(&req.url)).await?
    };
    created(&manifest)
}

async fn list_documents(State(s): State<AppState>) -> ApiResult {
    let docs = blocking(&s, |e| e.documents()).await?;
    ok(&json!({ "documents": docs }))
}

/// Document metadata, summaries and per-page previews; page text and
/// embeddings are served per page.
async fn get_document(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let (manifest, doc) = blocking(&s, move |e| Ok((e.manifest(&id)?, e.document(&id)?))).await?;
    let pages: Vec<Value> = doc
        .pages
        .iter()
        .map(|p| {
            json!({
                "index": p.index,
                "summary": p.summary,
                "chars": p.text.chars().count(),
                "image_refs": p.image_refs,
                "embedded": p.embedding.is_some(),
            })
        })
        .collect();
    ok(&json!({
        "doc_id": doc.doc_id,
        "origin": doc.origin,
        "media_kind": doc.media_kind,
        "metadata": doc.metadata,
        "summary": doc.summary,
        "hash": manifest.hash,
        "enrichment": manifest.enrichment,
        "warnings": manifest.warnings,
        "pages": pages,
    }))
}

async fn get_page(State(s): State<AppState>, Path((id, n)): Path<(String, String)>) -> ApiResult {
    let index: u32 = n.parse().map_err(|_| ServiceError::not_found("page", format!("{id}/{n}")))?;
    let page = blocking(&s, move |e| e.page(&id, index)).await?;
    ok(&page)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    question: String,
    #[serde(default)]
    history: Vec<ChatTurn>,
}

async fn chat(State(s): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let req: ChatRequest = body(&bytes)?;
    let answer = blocking(&s, move |e| e.chat(&id, &req.question, &req.history)).await?;
    ok(&answer)
}

// ---- triage and synthesis ----

#[derive(Deserialize)]
#[serde(untagged)]
enum Conversation {
    Transcript(String),
    Turns(Vec<ChatTurn>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TriageRequest {
    conversation: Conversation,
    #[serde(default)]
    doc_ids: Option<Vec<String>>,
}

async fn triage(State(s): State<AppState>, bytes: Bytes) -> ApiResult {
    let req: TriageRequest = body(&bytes)?;
    let turns = match req.conversation {
        Conversation::Transcript(t) => parse_transcript(&t),
        Conversation::Turns(t) => t,
    };
    let triage = blocking(&s, move |e| {
        let ids = match req.doc_ids {
            Some(ids) => ids,
            None => e.documents()?.into_iter().map(|m| m.doc_id).collect(),
        };
        e.triage(&turns, &ids)
    })
    .await?;
    ok(&triage)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthesizeRequest {
    goal: String,
    #[serde(default)]
    triage: Option<SourceTriage>,
}

async fn synthesize(State(s): State<AppState>, bytes: Bytes) -> ApiResult {
    let req: SynthesizeRequest = body(&bytes)?;
    let (id, graph) = blocking(&s, move |e| {
        let triage = match req.triage {
            Some(t) => t,
            None => crate::cli::read_json(&e.latest_triage_path())?,
        };
        e.synthesize(&req.goal, &triage)
    })
    .await?;
    created(&json!({ "id": id, "workflow": graph }))
}

async fn artifact(State(s): State<AppState>, Path(hash): Path<String>) -> ApiResult {
    let bytes = blocking(&s, move |e| e.artifact(&hash)).await?;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream"))], bytes).into_response())
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(engine: Arc<Engine>, addr: &str) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Io(format!("cannot bind {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| ServiceError::Io(e.to_string()))?;
    eprintln!("listening on http://{local}");
    axum::serve(listener, router(AppState::new(engine)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Io(e.to_string()))
}
