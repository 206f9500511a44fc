use infomorph_core::content::PatchError;
use infomorph_core::graph::GraphError;
use infomorph_core::ingest::{ChatError, IngestError};
use infomorph_core::morph::{SynthesisError, TriageError};
use infomorph_core::provider::ProviderError;
use infomorph_core::store::workflow_file::WorkflowFileError;
use infomorph_core::store::StoreError;
use serde::Serialize;

/// Every failure the service or CLI can report. Each variant has a stable
/// machine-readable code, an HTTP status and a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid request at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("{what} {id} not found")]
    NotFound { what: &'static str, id: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("workflow {0} is already executing")]
    Busy(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("{0}")]
    Fetch(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl ServiceError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        ServiceError::Validation { path: path.into(), message: message.into() }
    }

    pub fn not_found(what: &'static str, id: impl Into<String>) -> Self {
        ServiceError::NotFound { what, id: id.into() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Usage(_) => "usage",
            ServiceError::Validation { .. } => "validation",
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::Graph(g) => match g {
                GraphError::UnknownNode(_) | GraphError::UnknownEdge(_) => "not_found",
                GraphError::BadPort { .. } => "bad_port",
                GraphError::KindMismatch { .. } => "kind_mismatch",
                GraphError::ArityExceeded { .. } => "arity_exceeded",
                GraphError::DuplicateEdge { .. } => "duplicate_edge",
                GraphError::Cycle { .. } => "cycle",
                GraphError::InputArity { .. } => "input_arity",
                GraphError::NotClean(_) => "not_clean",
                GraphError::ApprovedLocked(_) => "approved_locked",
                GraphError::MissingFrozenOutput(_) => "missing_frozen_output",
                GraphError::InvalidConfig { .. } => "invalid_config",
                GraphError::UnsatisfiedInput { .. } => "unsatisfied_input",
            },
            ServiceError::Busy(_) => "execution_in_progress",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Unprocessable(_) => "unprocessable",
            ServiceError::Provider(_) => "provider_unavailable",
            ServiceError::Fetch(_) => "fetch_failed",
            ServiceError::Io(_) => "io",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Usage(_) | ServiceError::Validation { .. } => 400,
            ServiceError::NotFound { .. } => 404,
            ServiceError::Graph(g) => match g {
                GraphError::UnknownNode(_) | GraphError::UnknownEdge(_) => 404,
                GraphError::BadPort { .. } | GraphError::InvalidConfig { .. } => 400,
                GraphError::NotClean(_) | GraphError::ApprovedLocked(_) => 409,
                GraphError::MissingFrozenOutput(_) => 400,
                GraphError::KindMismatch { .. }
                | GraphError::ArityExceeded { .. }
                | GraphError::DuplicateEdge { .. }
                | GraphError::Cycle { .. }
                | GraphError::InputArity { .. }
                | GraphError::UnsatisfiedInput { .. } => 422,
            },
            ServiceError::Busy(_) | ServiceError::Conflict(_) => 409,
            ServiceError::Unprocessable(_) => 422,
            ServiceError::Provider(_) | ServiceError::Fetch(_) => 502,
            ServiceError::Io(_) => 500,
        }
    }

    /// 1 usage, 2 validation, 3 provider, 4 io.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Usage(_) => 1,
            ServiceError::Provider(_) => 3,
            ServiceError::Io(_) | ServiceError::Fetch(_) => 4,
            _ => 2,
        }
    }

    pub fn path(&self) -> Option<String> {
        match self {
            ServiceError::Validation { path, .. } => Some(path.clone()),
            ServiceError::Graph(GraphError::InvalidConfig { key, .. }) => Some(format!("config.{key}")),
            _ => None,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody { code: self.code().to_string(), message: self.to_string(), path: self.path() }
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        ServiceError::Io(e.to_string())
    }
}

impl From<WorkflowFileError> for ServiceError {
    fn from(e: WorkflowFileError) -> Self {
        match e {
            WorkflowFileError::Validation { path, message } => ServiceError::Validation { path, message },
            WorkflowFileError::SchemaVersionUnsupported(_) => ServiceError::validation("schema_version", e.to_string()),
            WorkflowFileError::Store(s) => s.into(),
        }
    }
}

impl From<ProviderError> for ServiceError {
    fn from(e: ProviderError) -> Self {
        ServiceError::Provider(e.to_string())
    }
}

impl From<IngestError> for ServiceError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } | IngestError::Store(_) => ServiceError::Io(e.to_string()),
            IngestError::Network(_) | IngestError::Fetch(_) => ServiceError::Fetch(e.to_string()),
            IngestError::UnsupportedFormat(_) | IngestError::Parse { .. } | IngestError::NotText(_) | IngestError::TooLarge(_) => {
                ServiceError::Unprocessable(e.to_string())
            }
        }
    }
}

impl From<ChatError> for ServiceError {
    fn from(e: ChatError) -> Self {
        match e {
            ChatError::Provider(p) => p.into(),
            other => ServiceError::Conflict(other.to_string()),
        }
    }
}

impl From<TriageError> for ServiceError {
    fn from(e: TriageError) -> Self {
        match e {
            TriageError::Provider(p) => p.into(),
            TriageError::UnknownDocument(d) => ServiceError::not_found("document", d),
            other => ServiceError::Unprocessable(other.to_string()),
        }
    }
}

impl From<SynthesisError> for ServiceError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Graph(g) => g.into(),
            SynthesisError::MissingDocument(d) => ServiceError::not_found("document", d),
            other => ServiceError::Unprocessable(other.to_string()),
        }
    }
}

impl From<PatchError> for ServiceError {
    fn from(e: PatchError) -> Self {
        match &e {
            PatchError::BadAddress { op, .. } => ServiceError::validation(format!("ops[{op}]"), e.to_string()),
            PatchError::InvariantViolation(_) => ServiceError::validation("ops", e.to_string()),
        }
    }
}
