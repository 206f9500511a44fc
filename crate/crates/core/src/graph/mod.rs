//! The workflow graph: a typed DAG of infomorph nodes.
//!
//! Mutations keep the graph acyclic and port-typed, and mark affected nodes
//! dirty. Dirty propagation never passes through an approved node: its
//! output is frozen, so nothing downstream of it can change.

pub mod config;
mod exec;
mod fingerprint;
mod kind;

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::content::ContentKind;
use crate::hash::ContentHash;

pub use exec::{
    execute, EvalContext, EvalError, Evaluated, Evaluator, ExecEvent, ExecOptions, ExecutionReport, Input,
    NodeFailure, Registry,
};
pub use fingerprint::{fingerprint, Fingerprint, ProviderIdentity};
pub use kind::{NodeKind, PortSpec, Taxonomy, MAX_FAN_IN};

/// Workflow file format version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "error", rename_all = "snake_case")]
pub enum NodeState {
    Pending,
    Dirty,
    Running,
    Clean,
    Failed(String),
}

pub type Config = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default)]
    pub config: Config,
    pub state: NodeState,
    #[serde(default)]
    pub approved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<ContentHash>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_output: Option<ContentHash>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_fingerprint: Option<Fingerprint>,
}

impl Node {
    /// The output downstream nodes consume: the frozen one when approved.
    pub fn effective_output(&self) -> Option<ContentHash> {
        if self.approved {
            self.frozen_output
        } else if self.state == NodeState::Clean {
            self.output
        } else {
            None
        }
    }

    pub fn config_str(&self, key: &str) -> Option<&str> {
        self.config.get(key).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub port: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub created_at: String,
    /// Presentation-only state (node positions, sizes). Never fingerprinted.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub layout: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowGraph {
    pub schema_version: u32,
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(with = "node_list")]
    pub nodes: BTreeMap<NodeId, Node>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

/// Nodes are written as a list ordered by id.
mod node_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(nodes: &BTreeMap<NodeId, Node>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(nodes.values())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<NodeId, Node>, D::Error> {
        let list = Vec::<Node>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for node in list {
            let id = node.id;
            if map.insert(id, node).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate node id {id}")));
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("edge {0} does not exist")]
    UnknownEdge(EdgeId),
    #[error("{kind} node {node} has no input port {port}")]
    BadPort { node: NodeId, kind: NodeKind, port: usize },
    #[error("port {port} of node {to} does not accept {produced}")]
    KindMismatch {
        from: NodeId,
        to: NodeId,
        port: usize,
        produced: ContentKind,
    },
    #[error("port {port} of node {node} already has its maximum of {max} inputs")]
    ArityExceeded { node: NodeId, port: usize, max: usize },
    #[error("edge {from} -> {to} (port {port}) already exists")]
    DuplicateEdge { from: NodeId, to: NodeId, port: usize },
    #[error("edge {from} -> {to} would create a cycle")]
    Cycle { from: NodeId, to: NodeId },
    #[error("node {node} port {port} has {count} inputs; needs {min}..={max}")]
    InputArity {
        node: NodeId,
        port: usize,
        count: usize,
        min: usize,
        max: usize,
    },
    #[error("node {0} has no computed output to approve")]
    NotClean(NodeId),
    #[error("node {0} is approved; revoke approval before editing it")]
    ApprovedLocked(NodeId),
    #[error("approved node {0} has no frozen output")]
    MissingFrozenOutput(NodeId),
    #[error("invalid config for node {node} at {key}: {reason}")]
    InvalidConfig { node: NodeId, key: String, reason: String },
    #[error("node {node} depends on failed node {producer}")]
    UnsatisfiedInput { node: NodeId, producer: NodeId },
}

/// Returned when an approved node is asked to become dirty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NoOpWarning {
    pub node: NodeId,
}

impl fmt::Display for NoOpWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {} is approved; it was not marked dirty", self.node)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirtyOutcome {
    pub dirtied: BTreeSet<NodeId>,
    pub warning: Option<NoOpWarning>,
}

impl Default for WorkflowGraph {
    fn default() -> Self {
        Self::new("")
    }
}

impl WorkflowGraph {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            metadata: Metadata {
                title: title.into(),
                ..Metadata::default()
            },
            nodes: BTreeMap::new(),
            edges: Vec::new(),
        }
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut Node, GraphError> {
        self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))
    }

    pub fn edge(&self, id: EdgeId) -> Result<&Edge, GraphError> {
        self.edges.iter().find(|e| e.id == id).ok_or(GraphError::UnknownEdge(id))
    }

    /// Incoming edges of `id`, ordered by (port, producer id).
    pub fn inputs_of(&self, id: NodeId) -> Vec<Edge> {
        let mut v: Vec<Edge> = self.edges.iter().filter(|e| e.to == id).copied().collect();
        v.sort_by_key(|e| (e.port, e.from, e.id));
        v
    }

    pub fn children(&self, id: NodeId) -> BTreeSet<NodeId> {
        self.edges.iter().filter(|e| e.from == id).map(|e| e.to).collect()
    }

    pub fn parents(&self, id: NodeId) -> BTreeSet<NodeId> {
        self.edges.iter().filter(|e| e.to == id).map(|e| e.from).collect()
    }

    pub fn add_node(&mut self, kind: NodeKind, config: Config) -> Result<NodeId, GraphError> {
        let id = NodeId(self.nodes.keys().next_back().map_or(1, |n| n.0 + 1));
        config::check(kind, &config).map_err(|(key, reason)| GraphError::InvalidConfig { node: id, key, reason })?;
        self.nodes.insert(
            id,
            Node {
                id,
                kind,
                config,
                state: NodeState::Pending,
                approved: false,
                output: None,
                frozen_output: None,
                last_fingerprint: None,
            },
        );
        Ok(id)
    }

    /// Removes a node and its edges; former children are marked dirty.
    pub fn remove_node(&mut self, id: NodeId) -> Result<DirtyOutcome, GraphError> {
        self.node(id)?;
        let children = self.children(id);
        self.edges.retain(|e| e.from != id && e.to != id);
        self.nodes.remove(&id);
        let mut out = DirtyOutcome::default();
        for child in children {
            out.dirtied.extend(self.propagate_dirty(child)?.dirtied);
        }
        Ok(out)
    }

    fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                queue.extend(self.children(n));
            }
        }
        false
    }

    /// Checks that `from -> to` on `port` could be added.
    pub fn check_edge(&self, from: NodeId, to: NodeId, port: usize) -> Result<(), GraphError> {
        let src = self.node(from)?;
        let dst = self.node(to)?;
        let spec = dst.kind.inputs().get(port).ok_or(GraphError::BadPort {
            node: to,
            kind: dst.kind,
            port,
        })?;
        let produced = src.kind.output();
        if !spec.accepts.contains(&produced) {
            return Err(GraphError::KindMismatch { from, to, port, produced });
        }
        if self.edges.iter().any(|e| e.from == from && e.to == to && e.port == port) {
            return Err(GraphError::DuplicateEdge { from, to, port });
        }
        let count = self.edges.iter().filter(|e| e.to == to && e.port == port).count();
        if count >= spec.max {
            return Err(GraphError::ArityExceeded { node: to, port, max: spec.max });
        }
        if from == to || self.reaches(to, from) {
            return Err(GraphError::Cycle { from, to });
        }
        Ok(())
    }

    /// Adds an edge and marks the target (and its descendants) dirty.
    /// On error the graph is unchanged.
    pub fn connect(&mut self, from: NodeId, to: NodeId, port: usize) -> Result<(EdgeId, DirtyOutcome), GraphError> {
        self.check_edge(from, to, port)?;
        let id = EdgeId(self.edges.iter().map(|e| e.id.0).max().map_or(1, |m| m + 1));
        self.edges.push(Edge { id, from, to, port });
        let dirty = self.propagate_dirty(to)?;
        Ok((id, dirty))
    }

    pub fn disconnect(&mut self, edge: EdgeId) -> Result<DirtyOutcome, GraphError> {
        let e = *self.edge(edge)?;
        self.edges.retain(|x| x.id != edge);
        self.propagate_dirty(e.to)
    }

    /// Kahn's algorithm; ready nodes are taken in ascending id order.
    pub fn topo_order(&self) -> Result<Vec<NodeId>, GraphError> {
        let mut indegree: BTreeMap<NodeId, usize> = self.nodes.keys().map(|&n| (n, 0)).collect();
        for e in &self.edges {
            *indegree.get_mut(&e.to).ok_or(GraphError::UnknownNode(e.to))? += 1;
            if !indegree.contains_key(&e.from) {
                return Err(GraphError::UnknownNode(e.from));
            }
        }
        let mut ready: BinaryHeap<Reverse<NodeId>> =
            indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| Reverse(n)).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(n)) = ready.pop() {
            order.push(n);
            for e in self.edges.iter().filter(|e| e.from == n) {
                let d = indegree.get_mut(&e.to).expect("edge target exists");
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(e.to));
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = indegree.iter().find(|(n, _)| !order.contains(n)).map(|(&n, _)| n).expect("cycle member");
            let from = self.parents(stuck).into_iter().find(|p| !order.contains(p)).unwrap_or(stuck);
            return Err(GraphError::Cycle { from, to: stuck });
        }
        Ok(order)
    }

    /// Marks `origin` and everything reachable from it dirty, without
    /// passing through approved nodes. Dirtying an approved origin is a
    /// no-op that returns a warning.
    pub fn propagate_dirty(&mut self, origin: NodeId) -> Result<DirtyOutcome, GraphError> {
        if self.node(origin)?.approved {
            return Ok(DirtyOutcome {
                dirtied: BTreeSet::new(),
                warning: Some(NoOpWarning { node: origin }),
            });
        }
        let mut dirtied = BTreeSet::new();
        let mut queue = VecDeque::from([origin]);
        while let Some(n) = queue.pop_front() {
            let node = self.nodes.get_mut(&n).expect("reachable nodes exist");
            if node.approved || !dirtied.insert(n) {
                continue;
            }
            node.state = NodeState::Dirty;
            queue.extend(self.children(n));
        }
        Ok(DirtyOutcome { dirtied, warning: None })
    }

    /// Approving requires a computed output, which becomes frozen.
    /// Revoking clears the freeze and dirties the node and its descendants.
    pub fn set_approval(&mut self, id: NodeId, approved: bool) -> Result<DirtyOutcome, GraphError> {
        let node = self.node_mut(id)?;
        if node.approved == approved {
            return Ok(DirtyOutcome::default());
        }
        if approved {
            let output = match (&node.state, node.output) {
                (NodeState::Clean, Some(h)) => h,
                _ => return Err(GraphError::NotClean(id)),
            };
            node.approved = true;
            node.frozen_output = Some(output);
            Ok(DirtyOutcome::default())
        } else {
            node.approved = false;
            node.frozen_output = None;
            self.propagate_dirty(id)
        }
    }

    /// Replaces a node's config. Rejected while the node is approved; a
    /// config equal to the current one changes nothing.
    pub fn update_config(&mut self, id: NodeId, config: Config) -> Result<DirtyOutcome, GraphError> {
        let node = self.node(id)?;
        if node.approved {
            return Err(GraphError::ApprovedLocked(id));
        }
        config::check(node.kind, &config).map_err(|(key, reason)| GraphError::InvalidConfig { node: id, key, reason })?;
        if node.config == config {
            return Ok(DirtyOutcome::default());
        }
        self.node_mut(id)?.config = config;
        self.propagate_dirty(id)
    }

    /// Sets one config key (`None` removes it).
    pub fn set_config_value(&mut self, id: NodeId, key: &str, value: Option<Value>) -> Result<DirtyOutcome, GraphError> {
        let mut config = self.node(id)?.config.clone();
        match value {
            Some(v) => config.insert(key.to_string(), v),
            None => config.remove(key),
        };
        self.update_config(id, config)
    }

    /// Dirty or pending, non-approved nodes in topological order.
    pub fn plan_execution(&self) -> Result<Vec<NodeId>, GraphError> {
        let order = self.topo_order()?;
        let mut plan = Vec::new();
        for id in order {
            let node = &self.nodes[&id];
            if node.approved || !matches!(node.state, NodeState::Dirty | NodeState::Pending) {
                continue;
            }
            for p in self.parents(id) {
                if matches!(self.nodes[&p].state, NodeState::Failed(_)) && !self.nodes[&p].approved {
                    return Err(GraphError::UnsatisfiedInput { node: id, producer: p });
                }
            }
            plan.push(id);
        }
        Ok(plan)
    }

    /// Input arity of `id` against its port specs.
    pub fn check_arity(&self, id: NodeId) -> Result<(), GraphError> {
        let node = self.node(id)?;
        for (port, spec) in node.kind.inputs().iter().enumerate() {
            let count = self.edges.iter().filter(|e| e.to == id && e.port == port).count();
            if count < spec.min || count > spec.max {
                return Err(GraphError::InputArity {
                    node: id,
                    port,
                    count,
                    min: spec.min,
                    max: spec.max,
                });
            }
        }
        Ok(())
    }

    /// Structural validation: edges, ports, kinds, acyclicity, approval
    /// invariants and config types. Returns the JSON path of the first
    /// problem alongside the error.
    pub fn validate(&self) -> Result<(), (String, GraphError)> {
        for (i, node) in self.nodes.values().enumerate() {
            let path = format!("nodes[{i}]");
            if node.approved && node.frozen_output.is_none() {
                return Err((path, GraphError::MissingFrozenOutput(node.id)));
            }
            config::check(node.kind, &node.config).map_err(|(key, reason)| {
                (
                    format!("{path}.config.{key}"),
                    GraphError::InvalidConfig { node: node.id, key, reason },
                )
            })?;
        }
        let mut seen_ids = BTreeSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            let path = format!("edges[{i}]");
            let from = self.node(e.from).map_err(|err| (format!("{path}.from"), err))?;
            let to = self.node(e.to).map_err(|err| (format!("{path}.to"), err))?;
            if !seen_ids.insert(e.id) {
                return Err((format!("{path}.id"), GraphError::UnknownEdge(e.id)));
            }
            let spec = to.kind.inputs().get(e.port).ok_or_else(|| {
                (
                    format!("{path}.port"),
                    GraphError::BadPort { node: e.to, kind: to.kind, port: e.port },
                )
            })?;
            if !spec.accepts.contains(&from.kind.output()) {
                return Err((
                    path,
                    GraphError::KindMismatch { from: e.from, to: e.to, port: e.port, produced: from.kind.output() },
                ));
            }
            let count = self.edges.iter().filter(|x| x.to == e.to && x.port == e.port).count();
            if count > spec.max {
                return Err((path, GraphError::ArityExceeded { node: e.to, port: e.port, max: spec.max }));
            }
            if self.edges[..i].iter().any(|x| x.from == e.from && x.to == e.to && x.port == e.port) {
                return Err((path, GraphError::DuplicateEdge { from: e.from, to: e.to, port: e.port }));
            }
        }
        self.topo_order().map_err(|err| ("edges".to_string(), err))?;
        Ok(())
    }

    /// Ancestors of `id`, including `id`.
    pub fn ancestors(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([id]);
        while let Some(n) = queue.pop_front() {
            if seen.insert(n) {
                queue.extend(self.parents(n));
            }
        }
        seen
    }

    /// Frozen outputs of approved nodes; these are pinned against eviction.
    pub fn pinned_outputs(&self) -> BTreeSet<ContentHash> {
        self.nodes.values().filter_map(|n| n.frozen_output).collect()
    }
}
