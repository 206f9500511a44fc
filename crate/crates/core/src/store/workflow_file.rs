//! Reading and writing workflow files (canonical, pretty-printed JSON).

use std::path::Path;

use serde_json::Value;

use super::{write_atomic, StoreError};
use crate::graph::{GraphError, WorkflowGraph, SCHEMA_VERSION};
use crate::hash::canonical_pretty;

#[derive(Debug, thiserror::Error)]
pub enum WorkflowFileError {
    #[error("schema version {0} is not supported (this build reads version {SCHEMA_VERSION})")]
    SchemaVersionUnsupported(u64),
    #[error("invalid workflow at {path}: {message}")]
    Validation { path: String, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl WorkflowFileError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        WorkflowFileError::Validation { path: path.into(), message: message.into() }
    }
}

/// Canonical bytes of a workflow file: sorted keys, two-space indent, LF.
pub fn to_bytes(graph: &WorkflowGraph) -> Result<Vec<u8>, WorkflowFileError> {
    graph.validate().map_err(|(path, e)| WorkflowFileError::at(path, e.to_string()))?;
    canonical_pretty(graph).map_err(|e| WorkflowFileError::at("$", e.to_string()))
}

pub fn from_bytes(bytes: &[u8]) -> Result<WorkflowGraph, WorkflowFileError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| WorkflowFileError::at("$", e.to_string()))?;
    let version = value
        .get("schema_version")
        .ok_or_else(|| WorkflowFileError::at("schema_version", "missing"))?
        .as_u64()
        .ok_or_else(|| WorkflowFileError::at("schema_version", "expected a non-negative integer"))?;
    if version != SCHEMA_VERSION as u64 {
        return Err(WorkflowFileError::SchemaVersionUnsupported(version));
    }
    let graph: WorkflowGraph = serde_path_to_error::deserialize(value)
        .map_err(|e| WorkflowFileError::at(e.path().to_string(), e.inner().to_string()))?;
    graph.validate().map_err(|(path, e)| WorkflowFileError::at(path, e.to_string()))?;
    Ok(graph)
}

pub fn save_workflow(graph: &WorkflowGraph, path: &Path) -> Result<(), WorkflowFileError> {
    let bytes = to_bytes(graph)?;
    write_atomic(path, &bytes)?;
    Ok(())
}

pub fn load_workflow(path: &Path) -> Result<WorkflowGraph, WorkflowFileError> {
    let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
    from_bytes(&bytes)
}

impl From<(String, GraphError)> for WorkflowFileError {
    fn from((path, e): (String, GraphError)) -> Self {
        WorkflowFileError::at(path, e.to_string())
    }
}
