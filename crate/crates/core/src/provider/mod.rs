//! The seam isolating every generative call: completion, embedding,
//! relevance judgment and image operations.
//!
//! [`MockProvider`] is a pure function of its inputs and is what every test
//! runs against. [`HttpProvider`] forwards the same operations to a remote
//! endpoint using the JSON wire format described in `docs/provider-wire.md`.

mod http;
mod mock;
mod mock_plan;
pub mod prompts;
pub mod text;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::content::Page;
use crate::embedding::Embedding;
use crate::hash::ContentHash;
use crate::store::BlobStore;

pub use http::{HttpProvider, HttpProviderConfig};
pub use mock::MockProvider;

/// Default relevance threshold for [`Provider::judge`].
pub const DEFAULT_JUDGE_THRESHOLD: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    /// Transient; callers may retry.
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("context of {bytes} bytes exceeds budget of {budget} bytes")]
    ContextOverflow { bytes: usize, budget: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("embedding mode {0} not supported by this provider")]
    UnsupportedMode(EmbedMode),
    #[error("blob {0} not found")]
    MissingBlob(ContentHash),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("blob store failure: {0}")]
    Store(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    Text,
    Image,
    Multimodal,
}

impl fmt::Display for EmbedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedMode::Text => "text",
            EmbedMode::Image => "image",
            EmbedMode::Multimodal => "multimodal",
        })
    }
}

impl std::str::FromStr for EmbedMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(EmbedMode::Text),
            "image" => Ok(EmbedMode::Image),
            "multimodal" => Ok(EmbedMode::Multimodal),
            other => Err(format!("unknown retrieval mode {other:?}")),
        }
    }
}

/// One item to embed. Which parts are used depends on the mode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmbedItem {
    pub text: String,
    pub images: Vec<Vec<u8>>,
}

impl EmbedItem {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            images: Vec::new(),
        }
    }
}

/// A piece of context handed to a completion, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    /// `page:<doc_id>#<n>`, `plan:<kind>:<hash>` or `summary:<n>`.
    pub reference: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ContentHash>,
}

impl ContextItem {
    pub fn page(doc_id: &str, page: u32, title: &str, text: &str) -> Self {
        Self {
            reference: format!("page:{doc_id}#{page}"),
            title: title.to_string(),
            text: text.to_string(),
            images: Vec::new(),
        }
    }

    /// `(doc_id, page)` when this item is a page reference.
    pub fn page_ref(&self) -> Option<(&str, u32)> {
        let rest = self.reference.strip_prefix("page:")?;
        let (doc, page) = rest.rsplit_once('#')?;
        Some((doc, page.parse().ok()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub system: String,
    pub context: Vec<ContextItem>,
    pub prompt: String,
    #[serde(default)]
    pub history: Vec<ChatTurn>,
}

impl CompletionRequest {
    pub fn context_bytes(&self) -> usize {
        self.context.iter().map(|c| c.text.len() + c.title.len()).sum()
    }

    /// Precondition shared by every provider.
    pub fn check(&self, budget: usize) -> Result<(), ProviderError> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("empty prompt".into()));
        }
        let bytes = self.context_bytes();
        if bytes > budget {
            return Err(ProviderError::ContextOverflow { bytes, budget });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Relevant,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub verdict: Verdict,
    pub score: f64,
    pub rationale: String,
}

impl Judgment {
    /// Verdict is relevant exactly when `score >= threshold`.
    pub fn from_score(score: f64, threshold: f64, rationale: String) -> Self {
        let score = score.clamp(0.0, 1.0);
        let verdict = if score >= threshold {
            Verdict::Relevant
        } else {
            Verdict::Irrelevant
        };
        Self {
            verdict,
            score,
            rationale,
        }
    }

    pub fn is_relevant(&self) -> bool {
        self.verdict == Verdict::Relevant
    }
}

pub trait Provider: Send + Sync {
    /// `mock` or `http:<endpoint-name>`.
    fn id(&self) -> &str;

    /// Parameters that change outputs; part of every node fingerprint.
    fn params(&self) -> Value;

    fn default_model(&self) -> &str;

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError>;

    fn embed(&self, model: &str, mode: EmbedMode, items: &[EmbedItem]) -> Result<Vec<Embedding>, ProviderError>;

    fn judge(&self, model: &str, page: &Page, extraction_prompt: &str, threshold: f64) -> Result<Judgment, ProviderError>;

    fn generate_image(&self, model: &str, prompt: &str, blobs: &dyn BlobStore) -> Result<ContentHash, ProviderError>;

    fn restyle_image(
        &self,
        model: &str,
        source: &ContentHash,
        prompt: &str,
        blobs: &dyn BlobStore,
    ) -> Result<ContentHash, ProviderError>;
}

/// Wraps a provider and counts every call made through it.
pub struct CountingProvider<'a> {
    inner: &'a dyn Provider,
    calls: AtomicU64,
}

impl<'a> CountingProvider<'a> {
    pub fn new(inner: &'a dyn Provider) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn tick(&self) {
        self.calls.fetch_add(1, Ordering::SeqCst);
    }
}

impl Provider for CountingProvider<'_> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn params(&self) -> Value {
        self.inner.params()
    }
    fn default_model(&self) -> &str {
        self.inner.default_model()
    }
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        self.tick();
        self.inner.complete(req)
    }
    fn embed(&self, model: &str, mode: EmbedMode, items: &[EmbedItem]) -> Result<Vec<Embedding>, ProviderError> {
        self.tick();
        self.inner.embed(model, mode, items)
    }
    fn judge(&self, model: &str, page: &Page, prompt: &str, threshold: f64) -> Result<Judgment, ProviderError> {
        self.tick();
        self.inner.judge(model, page, prompt, threshold)
    }
    fn generate_image(&self, model: &str, prompt: &str, blobs: &dyn BlobStore) -> Result<ContentHash, ProviderError> {
        self.tick();
        self.inner.generate_image(model, prompt, blobs)
    }
    fn restyle_image(
        &self,
        model: &str,
        source: &ContentHash,
        prompt: &str,
        blobs: &dyn BlobStore,
    ) -> Result<ContentHash, ProviderError> {
        self.tick();
        self.inner.restyle_image(model, source, prompt, blobs)
    }
}

/// Provider instances addressable by id from node configs.
#[derive(Clone)]
pub struct ProviderSet {
    providers: BTreeMap<String, Arc<dyn Provider>>,
    default_id: String,
}

impl Default for ProviderSet {
    fn default() -> Self {
        Self { providers: BTreeMap::new(), default_id: "mock".into() }
    }
}

impl ProviderSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Id used by nodes whose config names no provider; `mock` unless set.
    pub fn default_id(&self) -> &str {
        &self.default_id
    }

    pub fn set_default(&mut self, id: impl Into<String>) {
        self.default_id = id.into();
    }

    /// A set holding only the deterministic mock under id `mock`.
    pub fn mock() -> Self {
        let mut set = Self::new();
        set.insert(Arc::new(MockProvider::new()));
        set
    }

    pub fn insert(&mut self, provider: Arc<dyn Provider>) {
        self.providers.insert(provider.id().to_string(), provider);
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn Provider>> {
        self.providers.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.providers.keys().map(String::as_str)
    }
}

impl fmt::Debug for ProviderSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.providers.keys()).finish()
    }
}
