//! The execution driver.
//!
//! Nodes to evaluate are processed in waves: every node whose inputs are
//! all available is looked up in the cache by fingerprint, and the misses
//! of a wave are evaluated concurrently. Events and report entries are
//! emitted in topological order regardless of completion order.

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{fingerprint, Fingerprint, GraphError, Node, NodeId, NodeKind, NodeState, ProviderIdentity, WorkflowGraph};
use crate::content::{canonicalize, parse_content, Content, ContentError};
use crate::hash::ContentHash;
use crate::provider::{CountingProvider, Provider, ProviderError, ProviderSet};
use crate::store::{BlobStore, CacheLookup, Store};

/// One input value of a node being evaluated.
#[derive(Debug, Clone)]
pub struct Input {
    pub port: usize,
    pub from: NodeId,
    pub hash: ContentHash,
    pub content: Arc<Content>,
}

pub struct EvalContext<'a> {
    pub node: &'a Node,
    /// Ordered by (port, producer id).
    pub inputs: &'a [Input],
    pub provider: Option<&'a dyn Provider>,
    pub model: &'a str,
    pub blobs: &'a dyn BlobStore,
}

impl EvalContext<'_> {
    pub fn port(&self, port: usize) -> impl Iterator<Item = &Input> {
        self.inputs.iter().filter(move |i| i.port == port)
    }

    pub fn provider(&self) -> Result<&dyn Provider, EvalError> {
        self.provider
            .ok_or_else(|| EvalError::Config { key: "provider".into(), reason: "no provider available".into() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub content: Content,
    pub warnings: Vec<String>,
}

impl From<Content> for Evaluated {
    fn from(content: Content) -> Self {
        Self { content, warnings: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("config {key}: {reason}")]
    Config { key: String, reason: String },
    #[error("no inputs to evaluate")]
    EmptyInput,
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Content(#[from] ContentError),
    #[error("plan could not be parsed after repair: {0}")]
    PlanParse(String),
    #[error("template invalid: {0}")]
    TemplateInvalid(String),
    #[error("image {0} is not in the blob store")]
    UnresolvedImage(ContentHash),
    #[error("store error: {0}")]
    Store(String),
}

impl EvalError {
    pub fn config(key: &str, reason: impl Into<String>) -> Self {
        EvalError::Config { key: key.to_string(), reason: reason.into() }
    }
}

/// Evaluation must be a pure function of (config, inputs, provider).
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, ctx: &EvalContext<'_>) -> Result<Evaluated, EvalError>;
}

#[derive(Clone, Default)]
pub struct Registry {
    evaluators: HashMap<NodeKind, Arc<dyn Evaluator>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, kind: NodeKind, evaluator: Arc<dyn Evaluator>) {
        self.evaluators.insert(kind, evaluator);
    }

    pub fn get(&self, kind: NodeKind) -> Option<&Arc<dyn Evaluator>> {
        self.evaluators.get(&kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ExecEvent {
    Running { node: NodeId },
    /// Output reused without evaluation: a fingerprint hit, an unchanged
    /// clean node, or the frozen output of an approved node.
    CacheHit { node: NodeId, output: ContentHash, approved: bool },
    Clean { node: NodeId, output: ContentHash },
    Failed { node: NodeId, error: String },
    /// Not evaluated because an upstream node failed.
    Skipped { node: NodeId, blocked_by: NodeId },
}

#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub max_parallel: usize,
    /// Re-evaluate every non-approved node (still using the cache).
    pub full: bool,
    /// Only bring this node and its ancestors up to date.
    pub target: Option<NodeId>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { max_parallel: 4, full: false, target: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFailure {
    pub node: NodeId,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    /// Dirty nodes brought up to date, by cache hit or computation.
    pub evaluated: Vec<NodeId>,
    /// Nodes whose output was reused without calling an evaluator.
    pub cache_hits: Vec<NodeId>,
    /// Nodes whose evaluator ran successfully.
    pub computed: Vec<NodeId>,
    pub provider_calls: u64,
    pub failures: Vec<NodeFailure>,
    pub skipped: Vec<NodeId>,
    pub warnings: Vec<String>,
    pub corrupt_entries: usize,
}

struct Job {
    id: NodeId,
    node: Node,
    inputs: Vec<Input>,
    provider: Option<Arc<dyn Provider>>,
    model: String,
    fingerprint: Fingerprint,
}

type JobResult = (Result<Evaluated, EvalError>, u64);

fn load(
    store: &dyn Store,
    loaded: &mut HashMap<ContentHash, Arc<Content>>,
    hash: ContentHash,
    report: &mut ExecutionReport,
) -> Option<Arc<Content>> {
    if let Some(c) = loaded.get(&hash) {
        return Some(c.clone());
    }
    let bytes = match store.get_blob(&hash) {
        Ok(Some(b)) => b,
        Ok(None) => return None,
        Err(_) => {
            report.corrupt_entries += 1;
            return None;
        }
    };
    let content = Arc::new(parse_content(&bytes).ok()?);
    loaded.insert(hash, content.clone());
    Some(content)
}

/// Runs every dirty, non-approved node (restricted to the ancestors of
/// `opts.target` when set). Per-node failures are recorded in the report;
/// an `Err` means nothing was executed.
pub fn execute(
    graph: &mut WorkflowGraph,
    registry: &Registry,
    store: &dyn Store,
    providers: &ProviderSet,
    opts: &ExecOptions,
    sink: &mut dyn FnMut(&ExecEvent),
) -> Result<ExecutionReport, GraphError> {
    let order = graph.topo_order()?;
    let scope: BTreeSet<NodeId> = match opts.target {
        Some(t) => graph.ancestors(graph.node(t)?.id),
        None => order.iter().copied().collect(),
    };
    let mut report = ExecutionReport::default();
    let mut loaded: HashMap<ContentHash, Arc<Content>> = HashMap::new();

    for &id in &order {
        let node = graph.nodes.get_mut(&id).expect("ordered node exists");
        if !scope.contains(&id) || node.approved {
            continue;
        }
        if opts.full || matches!(node.state, NodeState::Failed(_) | NodeState::Running) {
            node.state = NodeState::Dirty;
        }
    }
    // Clean outputs must still be readable; otherwise recompute them.
    for &id in &order {
        let node = &graph.nodes[&id];
        if !scope.contains(&id) || node.approved || node.state != NodeState::Clean {
            continue;
        }
        let ok = node.output.is_some_and(|h| load(store, &mut loaded, h, &mut report).is_some());
        if !ok {
            graph.propagate_dirty(id)?;
        }
    }

    let plan: Vec<NodeId> = graph.plan_execution()?.into_iter().filter(|n| scope.contains(n)).collect();
    for &id in &plan {
        graph.check_arity(id)?;
    }
    let planned: BTreeSet<NodeId> = plan.iter().copied().collect();

    for &id in &order {
        if !scope.contains(&id) || planned.contains(&id) {
            continue;
        }
        let node = &graph.nodes[&id];
        if let Some(output) = node.effective_output() {
            report.cache_hits.push(id);
            sink(&ExecEvent::CacheHit { node: id, output, approved: node.approved });
        }
    }

    let mut remaining: Vec<NodeId> = plan;
    let mut blocked: HashMap<NodeId, NodeId> = HashMap::new();
    while !remaining.is_empty() {
        let mut ready = Vec::new();
        let mut waiting = Vec::new();
        for &id in &remaining {
            let parents = graph.parents(id);
            if let Some(&p) = parents.iter().find(|p| blocked.contains_key(p)) {
                blocked.insert(id, blocked[&p]);
            } else if let Some(p) = parents.iter().find(|p| matches!(graph.nodes[p].state, NodeState::Failed(_))) {
                blocked.insert(id, *p);
            } else if parents.iter().all(|p| !remaining.contains(p)) {
                ready.push(id);
            } else {
                waiting.push(id);
            }
        }
        for &id in &remaining {
            if let Some(&by) = blocked.get(&id) {
                if !report.skipped.contains(&id) {
                    report.skipped.push(id);
                    sink(&ExecEvent::Skipped { node: id, blocked_by: by });
                }
            }
        }
        if ready.is_empty() {
            break;
        }

        let mut jobs = Vec::new();
        for &id in &ready {
            match prepare(graph, id, store, providers, &mut loaded, &mut report) {
                Err(error) => fail(graph, id, error, &mut report, sink),
                Ok(job) => match store.cache_get(&job.fingerprint) {
                    CacheLookup::Hit { hash, bytes } => match parse_content(&bytes) {
                        Ok(content) if content.kind() == job.node.kind.output() => {
                            loaded.insert(hash, Arc::new(content));
                            let node = graph.nodes.get_mut(&id).expect("ready node exists");
                            node.state = NodeState::Clean;
                            node.output = Some(hash);
                            node.last_fingerprint = Some(job.fingerprint);
                            report.evaluated.push(id);
                            report.cache_hits.push(id);
                            sink(&ExecEvent::CacheHit { node: id, output: hash, approved: false });
                        }
                        _ => {
                            report.corrupt_entries += 1;
                            jobs.push(job);
                        }
                    },
                    CacheLookup::Corrupt { .. } => {
                        report.corrupt_entries += 1;
                        jobs.push(job);
                    }
                    CacheLookup::Miss => jobs.push(job),
                },
            }
        }
        for job in &jobs {
            graph.nodes.get_mut(&job.id).expect("job node exists").state = NodeState::Running;
            sink(&ExecEvent::Running { node: job.id });
        }
        let results = run_jobs(&jobs, registry, store, opts.max_parallel);
        for (job, (result, calls)) in jobs.iter().zip(results) {
            report.provider_calls += calls;
            let stored = result.and_then(|ev| {
                if ev.content.kind() != job.node.kind.output() {
                    return Err(EvalError::Input(format!(
                        "evaluator produced {} instead of {}",
                        ev.content.kind(),
                        job.node.kind.output()
                    )));
                }
                let bytes = canonicalize(&ev.content)?;
                let hash = ContentHash::of(&bytes);
                store
                    .cache_put(&job.fingerprint, &hash, &bytes)
                    .map_err(|e| EvalError::Store(e.to_string()))?;
                Ok((hash, ev))
            });
            match stored {
                Ok((hash, ev)) => {
                    report.warnings.extend(ev.warnings.into_iter().map(|w| format!("node {}: {w}", job.id)));
                    loaded.insert(hash, Arc::new(ev.content));
                    let node = graph.nodes.get_mut(&job.id).expect("job node exists");
                    node.state = NodeState::Clean;
                    node.output = Some(hash);
                    node.last_fingerprint = Some(job.fingerprint);
                    report.evaluated.push(job.id);
                    report.computed.push(job.id);
                    sink(&ExecEvent::Clean { node: job.id, output: hash });
                }
                Err(e) => fail(graph, job.id, e.to_string(), &mut report, sink),
            }
        }
        remaining = waiting;
    }
    Ok(report)
}

fn fail(
    graph: &mut WorkflowGraph,
    id: NodeId,
    error: String,
    report: &mut ExecutionReport,
    sink: &mut dyn FnMut(&ExecEvent),
) {
    let node = graph.nodes.get_mut(&id).expect("failed node exists");
    node.state = NodeState::Failed(error.clone());
    node.output = None;
    node.last_fingerprint = None;
    report.failures.push(NodeFailure { node: id, error: error.clone() });
    sink(&ExecEvent::Failed { node: id, error });
}

fn prepare(
    graph: &WorkflowGraph,
    id: NodeId,
    store: &dyn Store,
    providers: &ProviderSet,
    loaded: &mut HashMap<ContentHash, Arc<Content>>,
    report: &mut ExecutionReport,
) -> Result<Job, String> {
    let node = graph.nodes[&id].clone();
    let mut inputs = Vec::new();
    for edge in graph.inputs_of(id) {
        let producer = &graph.nodes[&edge.from];
        let hash = producer
            .effective_output()
            .ok_or_else(|| format!("input from node {} has no output", edge.from))?;
        let content = load(store, loaded, hash, report)
            .ok_or_else(|| format!("output {hash} of node {} is unavailable", edge.from))?;
        inputs.push(Input { port: edge.port, from: edge.from, hash, content });
    }
    let (provider, model, identity) = if node.kind.uses_provider() {
        let pid = node.config_str("provider").unwrap_or(providers.default_id());
        let provider = providers.get(pid).ok_or_else(|| format!("unknown provider {pid:?}"))?.clone();
        let model = node.config_str("model").unwrap_or(provider.default_model()).to_string();
        let identity = ProviderIdentity { id: pid.to_string(), model: model.clone(), params: provider.params() };
        (Some(provider), model, Some(identity))
    } else {
        (None, String::new(), None)
    };
    let keyed: Vec<_> = inputs.iter().map(|i| (i.port, i.from, i.hash)).collect();
    let fingerprint = fingerprint(node.kind, &node.config, &keyed, identity.as_ref());
    Ok(Job { id, node, inputs, provider, model, fingerprint })
}

fn run_jobs(jobs: &[Job], registry: &Registry, store: &dyn Store, max_parallel: usize) -> Vec<JobResult> {
    let slots: Vec<Mutex<Option<JobResult>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = max_parallel.max(1).min(jobs.len());
    let blobs: &dyn BlobStore = store;
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let result = run_one(job, registry, blobs);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every job ran"))
        .collect()
}

fn run_one(job: &Job, registry: &Registry, blobs: &dyn BlobStore) -> JobResult {
    let Some(evaluator) = registry.get(job.node.kind) else {
        return (Err(EvalError::config("kind", format!("no evaluator registered for {}", job.node.kind))), 0);
    };
    let counting = job.provider.as_deref().map(CountingProvider::new);
    let ctx = EvalContext {
        node: &job.node,
        inputs: &job.inputs,
        provider: counting.as_ref().map(|c| c as &dyn Provider),
        model: &job.model,
        blobs,
    };
    let result = catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(&ctx)))
        .unwrap_or_else(|_| Err(EvalError::Input("evaluator panicked".into())));
    (result, counting.map_or(0, |c| c.calls()))
}
