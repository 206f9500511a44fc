//! Engine operations shared by the HTTP service and the CLI: workflow
//! persistence with per-workflow serialization, execution, documents,
//! triage, synthesis and export.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use infomorph_core::content::{apply_patch, parse_content, Content, Document, PlanPatch};
use infomorph_core::graph::{
    execute, Config, DirtyOutcome, EdgeId, ExecEvent, ExecOptions, ExecutionReport, GraphError, NodeId, NodeKind,
    Registry, WorkflowGraph,
};
use infomorph_core::hash::ContentHash;
use infomorph_core::ingest::{self, enrich, scoped_chat, store_document, ChatAnswer, Fetcher, IngestManifest, Ingested};
use infomorph_core::morph::{standard_registry, synthesize_workflow, triage_sources, SourceTriage};
use infomorph_core::provider::{ChatTurn, Provider, ProviderSet};
use infomorph_core::store::workflow_file::{from_bytes, load_workflow, save_workflow, to_bytes};
use infomorph_core::store::{write_atomic, BlobStore, FsStore};
use serde::Serialize;
use serde_json::Value;

use crate::config::Config as ServiceConfig;
use crate::error::ServiceError;

/// Relevance threshold for per-document chat retrieval.
pub const CHAT_THRESHOLD: f64 = 0.5;

struct Slot {
    path: PathBuf,
    graph: WorkflowGraph,
}

pub struct Engine {
    store: FsStore,
    providers: ProviderSet,
    registry: Registry,
    model: String,
    max_parallel: usize,
    fetcher: Fetcher,
    workflows: Mutex<BTreeMap<String, Arc<Mutex<Slot>>>>,
    running: Mutex<BTreeSet<String>>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub target: Option<NodeId>,
    pub full: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dirtied {
    pub dirtied: Vec<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl From<DirtyOutcome> for Dirtied {
    fn from(d: DirtyOutcome) -> Self {
        Self { dirtied: d.dirtied.into_iter().collect(), warning: d.warning.map(|w| w.to_string()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeOutput {
    pub node: NodeId,
    pub hash: ContentHash,
    pub approved: bool,
    pub content: Content,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PageView {
    pub index: u32,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    pub image_refs: Vec<ContentHash>,
    pub embedded: bool,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn check_id(what: &'static str, id: &str) -> Result<(), ServiceError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(ServiceError::not_found(what, id))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ServiceError {
    ServiceError::Io(format!("{}: {e}", path.display()))
}

/// Marks a workflow as executing until dropped.
pub struct ExecGuard<'a> {
    engine: &'a Engine,
    id: String,
}

impl Drop for ExecGuard<'_> {
    fn drop(&mut self) {
        lock(&self.engine.running).remove(&self.id);
    }
}

impl ExecGuard<'_> {
    pub fn workflow(&self) -> &str {
        &self.id
    }

    /// Executes on a copy of the graph and commits it, saved, once done.
    pub fn run(&self, opts: &RunOptions, sink: &mut dyn FnMut(&ExecEvent)) -> Result<ExecutionReport, ServiceError> {
        let e = self.engine;
        let slot = e.slot(&self.id)?;
        let mut slot = lock(&slot);
        let mut graph = slot.graph.clone();
        let exec = ExecOptions { max_parallel: e.max_parallel, full: opts.full, target: opts.target };
        let report = execute(&mut graph, &e.registry, &e.store, &e.providers, &exec, sink)?;
        save_workflow(&graph, &slot.path)?;
        slot.graph = graph;
        Ok(report)
    }
}

impl Engine {
    pub fn open(config: &ServiceConfig) -> Result<Self, ServiceError> {
        Self::with_providers(&config.data_dir, config.providers(), config.model(), config.max_parallel)
    }

    pub fn with_providers(
        data_dir: &Path,
        providers: ProviderSet,
        model: &str,
        max_parallel: usize,
    ) -> Result<Self, ServiceError> {
        let store = FsStore::open(data_dir)?;
        Ok(Self {
            store,
            providers,
            registry: standard_registry(),
            model: model.to_string(),
            max_parallel: max_parallel.max(1),
            fetcher: Fetcher::default(),
            workflows: Mutex::new(BTreeMap::new()),
            running: Mutex::new(BTreeSet::new()),
        })
    }

    pub fn store(&self) -> &FsStore {
        &self.store
    }

    fn provider(&self) -> Result<&Arc<dyn Provider>, ServiceError> {
        let id = self.providers.default_id();
        self.providers.get(id).ok_or_else(|| ServiceError::Provider(format!("provider {id} is not configured")))
    }

    // ---- workflows ----

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, ServiceError> {
        let mut map = lock(&self.workflows);
        if let Some(s) = map.get(id) {
            return Ok(s.clone());
        }
        check_id("workflow", id)?;
        let path = self.store.workflows_dir().join(format!("{id}.json"));
        if !path.exists() {
            return Err(ServiceError::not_found("workflow", id));
        }
        let graph = load_workflow(&path)?;
        let slot = Arc::new(Mutex::new(Slot { path, graph }));
        map.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    /// Registers a workflow file outside the data directory under its path;
    /// changes are saved back to that file.
    pub fn attach_file(&self, path: &Path) -> Result<String, ServiceError> {
        let graph = load_workflow(path)?;
        let id = path.display().to_string();
        let slot = Arc::new(Mutex::new(Slot { path: path.to_path_buf(), graph }));
        lock(&self.workflows).insert(id.clone(), slot);
        Ok(id)
    }

    /// `reference` is a workflow id or the path of a workflow file.
    pub fn resolve_workflow(&self, reference: &str) -> Result<String, ServiceError> {
        if lock(&self.workflows).contains_key(reference) {
            return Ok(reference.to_string());
        }
        let as_path = Path::new(reference);
        if as_path.is_file() {
            return self.attach_file(as_path);
        }
        self.slot(reference).map(|_| reference.to_string())
    }

    fn next_id(&self, map: &BTreeMap<String, Arc<Mutex<Slot>>>) -> Result<String, ServiceError> {
        let dir = self.store.workflows_dir();
        let mut max = 0u64;
        let entries = std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?;
        let on_disk = entries.filter_map(|e| e.ok()).filter_map(|e| {
            e.path().file_stem().and_then(|s| s.to_str()).map(str::to_string)
        });
        for name in on_disk.chain(map.keys().cloned()) {
            if let Some(n) = name.strip_prefix("wf-").and_then(|n| n.parse::<u64>().ok()) {
                max = max.max(n);
            }
        }
        Ok(format!("wf-{}", max + 1))
    }

    /// Stores `graph` under a fresh id.
    pub fn create_workflow(&self, graph: WorkflowGraph) -> Result<String, ServiceError> {
        let mut map = lock(&self.workflows);
        let id = self.next_id(&map)?;
        let path = self.store.workflows_dir().join(format!("{id}.json"));
        save_workflow(&graph, &path)?;
        map.insert(id.clone(), Arc::new(Mutex::new(Slot { path, graph })));
        Ok(id)
    }

    pub fn workflow(&self, id: &str) -> Result<WorkflowGraph, ServiceError> {
        let slot = self.slot(id)?;
        let graph = lock(&slot).graph.clone();
        Ok(graph)
    }

    pub fn workflow_ids(&self) -> Result<Vec<String>, ServiceError> {
        let dir = self.store.workflows_dir();
        let mut ids: BTreeSet<String> = std::fs::read_dir(&dir)
            .map_err(|e| io_err(&dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .filter_map(|e| e.path().file_stem().and_then(|s| s.to_str()).map(str::to_string))
            .collect();
        ids.extend(lock(&self.workflows).keys().cloned());
        Ok(ids.into_iter().collect())
    }

    /// Replaces (or creates) a workflow from its file bytes.
    pub fn put_workflow(&self, id: &str, bytes: &[u8]) -> Result<WorkflowGraph, ServiceError> {
        check_id("workflow", id)?;
        let graph = from_bytes(bytes)?;
        if lock(&self.running).contains(id) {
            return Err(ServiceError::Busy(id.to_string()));
        }
        let existing = self.slot(id).ok();
        match existing {
            Some(slot) => {
                let mut slot = lock(&slot);
                save_workflow(&graph, &slot.path)?;
                slot.graph = graph.clone();
            }
            None => {
                let mut map = lock(&self.workflows);
                let path = self.store.workflows_dir().join(format!("{id}.json"));
                save_workflow(&graph, &path)?;
                map.insert(id.to_string(), Arc::new(Mutex::new(Slot { path, graph: graph.clone() })));
            }
        }
        Ok(graph)
    }

    /// Applies `f` to a copy of the workflow; commits and saves only if it
    /// succeeds, so failed requests leave no trace.
    pub fn mutate<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut WorkflowGraph) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let slot = self.slot(id)?;
        let mut slot = lock(&slot);
        let mut graph = slot.graph.clone();
        let out = f(&mut graph)?;
        if graph != slot.graph {
            save_workflow(&graph, &slot.path)?;
            slot.graph = graph;
        }
        Ok(out)
    }

    pub fn add_node(&self, wf: &str, kind: NodeKind, config: Config, layout: Option<Value>) -> Result<NodeId, ServiceError> {
        self.mutate(wf, |g| {
            let id = g.add_node(kind, config)?;
            if let Some(l) = layout {
                g.metadata.layout.insert(id.0.to_string(), l);
            }
            Ok(id)
        })
    }

    pub fn update_config(&self, wf: &str, node: NodeId, config: Config) -> Result<Dirtied, ServiceError> {
        self.mutate(wf, |g| Ok(g.update_config(node, config)?.into()))
    }

    pub fn connect(&self, wf: &str, from: NodeId, to: NodeId, port: usize) -> Result<(EdgeId, Dirtied), ServiceError> {
        self.mutate(wf, |g| {
            let (edge, d) = g.connect(from, to, port)?;
            Ok((edge, d.into()))
        })
    }

    pub fn disconnect(&self, wf: &str, edge: EdgeId) -> Result<Dirtied, ServiceError> {
        self.mutate(wf, |g| Ok(g.disconnect(edge)?.into()))
    }

    pub fn set_approval(&self, wf: &str, node: NodeId, approved: bool) -> Result<Dirtied, ServiceError> {
        self.mutate(wf, |g| Ok(g.set_approval(node, approved)?.into()))
    }

    /// Appends `patch` to a viewer's recorded edits after checking that it
    /// applies to the viewer's current output.
    pub fn patch_viewer(&self, wf: &str, node: NodeId, patch: PlanPatch) -> Result<(Content, Dirtied), ServiceError> {
        self.mutate(wf, |g| {
            let n = g.node(node)?;
            if !matches!(n.kind, NodeKind::DocumentEditor | NodeKind::SlideDeckViewer | NodeKind::SpreadsheetViewer) {
                return Err(ServiceError::validation("node", format!("{} node {node} does not take plan edits", n.kind)));
            }
            if n.approved {
                return Err(GraphError::ApprovedLocked(node).into());
            }
            let current = n.output.filter(|_| n.state == infomorph_core::graph::NodeState::Clean);
            let current = current.ok_or(GraphError::NotClean(node))?;
            let plan = self.content(&current)?.into_plan().ok_or_else(|| ServiceError::Io("viewer output is not a plan".into()))?;
            let patched = apply_patch(&plan, &patch)?;
            let recorded: PlanPatch = match n.config.get("patches") {
                None | Some(Value::Null) => PlanPatch::default(),
                Some(v) => serde_json::from_value(v.clone()).map_err(|e| ServiceError::validation("config.patches", e.to_string()))?,
            };
            let combined = serde_json::to_value(recorded.then(patch)).expect("patch serializes");
            let dirtied = g.set_config_value(node, "patches", Some(combined))?;
            Ok((Content::from(patched), dirtied.into()))
        })
    }

    fn content(&self, hash: &ContentHash) -> Result<Content, ServiceError> {
        let bytes = self.store.get_blob(hash)?.ok_or_else(|| ServiceError::not_found("blob", hash.to_hex()))?;
        parse_content(&bytes).map_err(|e| ServiceError::Io(format!("stored content {hash} is invalid: {e}")))
    }

    pub fn node_output(&self, wf: &str, node: NodeId) -> Result<NodeOutput, ServiceError> {
        let slot = self.slot(wf)?;
        let (hash, approved) = {
            let slot = lock(&slot);
            let n = slot.graph.node(node)?;
            let hash = n.effective_output().ok_or_else(|| ServiceError::not_found("output of node", node.to_string()))?;
            (hash, n.approved)
        };
        Ok(NodeOutput { node, hash, approved, content: self.content(&hash)? })
    }

    // ---- execution ----

    /// Claims the workflow for one execution; `Busy` if one is running.
    pub fn begin(&self, wf: &str) -> Result<ExecGuard<'_>, ServiceError> {
        self.slot(wf)?;
        if !lock(&self.running).insert(wf.to_string()) {
            return Err(ServiceError::Busy(wf.to_string()));
        }
        Ok(ExecGuard { engine: self, id: wf.to_string() })
    }

    pub fn run(&self, wf: &str, opts: &RunOptions, sink: &mut dyn FnMut(&ExecEvent)) -> Result<ExecutionReport, ServiceError> {
        self.begin(wf)?.run(opts, sink)
    }

    pub fn save_report(&self, name: &str, report: &ExecutionReport) -> Result<PathBuf, ServiceError> {
        let path = self.store.reports_dir().join(format!("{name}.json"));
        let bytes = serde_json::to_vec_pretty(report).expect("report serializes");
        write_atomic(&path, &bytes)?;
        Ok(path)
    }

    /// Writes every file of a clean builder's artifact under `out`.
    pub fn export(&self, wf: &str, node: NodeId, out: &Path) -> Result<Vec<PathBuf>, ServiceError> {
        let (kind, output) = {
            let slot = self.slot(wf)?;
            let slot = lock(&slot);
            let n = slot.graph.node(node)?;
            let clean = n.approved || n.state == infomorph_core::graph::NodeState::Clean;
            (n.kind, n.effective_output().filter(|_| clean))
        };
        if !matches!(kind, NodeKind::DocumentBuilder | NodeKind::SlideDeckBuilder | NodeKind::SpreadsheetBuilder) {
            return Err(ServiceError::validation("node", format!("{kind} node {node} is not a builder")));
        }
        let hash = output.ok_or(GraphError::NotClean(node))?;
        let Content::Artifact(artifact) = self.content(&hash)? else {
            return Err(ServiceError::Io(format!("output of node {node} is not an artifact")));
        };
        let mut written = Vec::new();
        for (name, file_hash) in &artifact.files {
            let bytes = self.store.get_blob(file_hash)?.ok_or_else(|| ServiceError::not_found("blob", file_hash.to_hex()))?;
            let path = out.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }

    // ---- documents ----

    fn finish_ingest(&self, ingested: Ingested) -> Result<IngestManifest, ServiceError> {
        let provider = self.provider()?;
        let outcome = enrich(&ingested.document, provider.as_ref(), &self.model, &self.store);
        let hash = store_document(&outcome.document, &self.store)?;
        let mut warnings = ingested.warnings;
        warnings.extend(outcome.failures);
        let manifest = IngestManifest::new(&outcome.document, hash, warnings);
        let path = self.store.documents_dir().join(format!("{}.json", manifest.doc_id));
        let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write_atomic(&path, &bytes)?;
        Ok(manifest)
    }

    /// Ingests a local file. The recorded origin is `path` as given, or
    /// its remainder below `relative_to`.
    pub fn ingest_path(&self, path: &Path, relative_to: Option<&Path>) -> Result<IngestManifest, ServiceError> {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        let origin = relative_to
            .and_then(|base| path.strip_prefix(base).ok())
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        let ingested = ingest::ingest_bytes(&origin, &origin, &bytes, None, &self.store)?;
        self.finish_ingest(ingested)
    }

    pub fn ingest_upload(&self, name: &str, bytes: &[u8]) -> Result<IngestManifest, ServiceError> {
        let ingested = ingest::ingest_bytes(name, name, bytes, None, &self.store)?;
        self.finish_ingest(ingested)
    }

    pub fn ingest_url(&self, url: &str) -> Result<IngestManifest, ServiceError> {
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(ServiceError::validation("url", "must be an http or https URL"));
        }
        let ingested = ingest::ingest_url(url, &self.fetcher, &self.store)?;
        self.finish_ingest(ingested)
    }

    pub fn manifest(&self, doc_id: &str) -> Result<IngestManifest, ServiceError> {
        check_id("document", doc_id)?;
        let path = self.store.documents_dir().join(format!("{doc_id}.json"));
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ServiceError::not_found("document", doc_id)),
            Err(e) => return Err(io_err(&path, e)),
        };
        serde_json::from_slice(&bytes).map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))
    }

    pub fn documents(&self) -> Result<Vec<IngestManifest>, ServiceError> {
        let dir = self.store.documents_dir();
        let mut ids: Vec<String> = std::fs::read_dir(&dir)
            .map_err(|e| io_err(&dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.path().file_stem().and_then(|s| s.to_str()).map(str::to_string))
            .collect();
        ids.sort();
        ids.iter().map(|id| self.manifest(id)).collect()
    }

    pub fn document(&self, doc_id: &str) -> Result<Document, ServiceError> {
        let manifest = self.manifest(doc_id)?;
        match self.content(&manifest.hash)? {
            Content::Document(d) => Ok(d),
            other => Err(ServiceError::Io(format!("document {doc_id} is stored as {}", other.kind()))),
        }
    }

    pub fn page(&self, doc_id: &str, index: u32) -> Result<PageView, ServiceError> {
        let doc = self.document(doc_id)?;
        let page = doc.page(index).ok_or_else(|| ServiceError::not_found("page", format!("{doc_id}/{index}")))?;
        Ok(PageView {
            index: page.index,
            text: page.text.clone(),
            summary: page.summary.clone(),
            image_refs: page.image_refs.clone(),
            embedded: page.embedding.is_some(),
        })
    }

    pub fn chat(&self, doc_id: &str, question: &str, history: &[ChatTurn]) -> Result<ChatAnswer, ServiceError> {
        if question.trim().is_empty() {
            return Err(ServiceError::validation("question", "must not be empty"));
        }
        let doc = self.document(doc_id)?;
        let provider = self.provider()?;
        Ok(scoped_chat(&doc, question, history, provider.as_ref(), &self.model, CHAT_THRESHOLD)?)
    }

    // ---- triage and synthesis ----

    pub fn triage(&self, conversation: &[ChatTurn], doc_ids: &[String]) -> Result<SourceTriage, ServiceError> {
        let docs = doc_ids.iter().map(|id| self.document(id)).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&Document> = docs.iter().collect();
        let provider = self.provider()?;
        let triage = triage_sources(conversation, &refs, provider.as_ref(), &self.model)?;
        let path = self.latest_triage_path();
        write_atomic(&path, &serde_json::to_vec_pretty(&triage).expect("triage serializes"))?;
        Ok(triage)
    }

    pub fn latest_triage_path(&self) -> PathBuf {
        self.store.reports_dir().join("triage.json")
    }

    /// Builds the workflow for `goal` from the relevant sources of `triage`
    /// and stores it under a fresh id.
    pub fn synthesize(&self, goal: &str, triage: &SourceTriage) -> Result<(String, WorkflowGraph), ServiceError> {
        if goal.trim().is_empty() {
            return Err(ServiceError::validation("goal", "must not be empty"));
        }
        let mut docs = Vec::new();
        for id in triage.relevant() {
            docs.push(self.document(id)?);
        }
        let refs: Vec<&Document> = docs.iter().collect();
        let graph = synthesize_workflow(goal, triage, &refs)?;
        let id = self.create_workflow(graph.clone())?;
        Ok((id, graph))
    }

    // ---- blobs ----

    pub fn artifact(&self, hash: &str) -> Result<Vec<u8>, ServiceError> {
        let h: ContentHash = hash.parse().map_err(|_| ServiceError::not_found("artifact", hash))?;
        self.store.get_blob(&h)?.ok_or_else(|| ServiceError::not_found("artifact", hash))
    }

    /// Canonical workflow file bytes.
    pub fn workflow_bytes(&self, id: &str) -> Result<Vec<u8>, ServiceError> {
        Ok(to_bytes(&self.workflow(id)?)?)
    }
}
