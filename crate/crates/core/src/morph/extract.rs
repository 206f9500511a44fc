//! Relevant-page extraction.
//!
//! `two_stage` ranks every page by cosine similarity between its embedding
//! and the embedded extraction prompt, keeps the top `k` (ties broken by
//! doc id, then page index), and asks the provider to judge each candidate.
//! `exhaustive` judges every page. Either way the relevant pages are
//! returned as a [`PageSet`] (score desc, doc id, page). Pages with neither
//! text nor images are never candidates.

use serde_json::Value;

use crate::content::{Document, Page, PageEntry, PageSet};
use crate::graph::config::{EXTRACTION_MODES, RETRIEVAL_MODES};
use crate::graph::{Config, EvalError};
use crate::provider::{EmbedItem, EmbedMode, Provider, ProviderError, DEFAULT_JUDGE_THRESHOLD};

pub const DEFAULT_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractMode {
    TwoStage,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorConfig {
    pub extraction_prompt: String,
    pub mode: ExtractMode,
    pub k: usize,
    pub retrieval_mode: EmbedMode,
    pub tau: f64,
}

impl ExtractorConfig {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            extraction_prompt: prompt.into(),
            mode: ExtractMode::TwoStage,
            k: DEFAULT_K,
            retrieval_mode: EmbedMode::Text,
            tau: DEFAULT_JUDGE_THRESHOLD,
        }
    }

    pub fn from_config(config: &Config) -> Result<Self, EvalError> {
        let prompt = config
            .get("extraction_prompt")
            .and_then(Value::as_str)
            .filter(|p| !p.trim().is_empty())
            .ok_or_else(|| EvalError::config("extraction_prompt", "required"))?;
        let mut cfg = Self::new(prompt);
        if let Some(m) = config.get("mode").and_then(Value::as_str) {
            cfg.mode = match m {
                "exhaustive" => ExtractMode::Exhaustive,
                "two_stage" => ExtractMode::TwoStage,
                _ => return Err(EvalError::config("mode", format!("expected one of {}", EXTRACTION_MODES.join(", ")))),
            };
        }
        if let Some(k) = config.get("k") {
            cfg.k = k.as_u64().filter(|&k| k >= 1).ok_or_else(|| EvalError::config("k", "must be >= 1"))? as usize;
        }
        if let Some(m) = config.get("retrieval_mode").and_then(Value::as_str) {
            cfg.retrieval_mode = m
                .parse()
                .map_err(|_| EvalError::config("retrieval_mode", format!("expected one of {}", RETRIEVAL_MODES.join(", "))))?;
        }
        if let Some(t) = config.get("tau").and_then(Value::as_f64) {
            cfg.tau = t;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("no documents to extract from")]
    EmptyInput,
    #[error("page {page} of {doc_id} has no embedding; two_stage needs enriched documents")]
    MissingEmbedding { doc_id: String, page: u32 },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl From<ExtractError> for EvalError {
    fn from(e: ExtractError) -> Self {
        match e {
            ExtractError::EmptyInput => EvalError::EmptyInput,
            ExtractError::Provider(p) => EvalError::Provider(p),
            other => EvalError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub pages: PageSet,
    /// Pages that were judged, in ranking order.
    pub candidates: Vec<(String, u32)>,
}

fn judgeable(page: &Page) -> bool {
    !page.text.trim().is_empty() || !page.image_refs.is_empty()
}

/// Stage one of `two_stage`: the `k` pages most similar to the prompt.
pub fn rank_candidates<'a>(
    docs: &[&'a Document],
    cfg: &ExtractorConfig,
    provider: &dyn Provider,
    model: &str,
) -> Result<Vec<(&'a Document, &'a Page, f64)>, ExtractError> {
    let query = provider
        .embed(model, cfg.retrieval_mode, &[EmbedItem::text(&cfg.extraction_prompt)])?
        .pop()
        .ok_or_else(|| ProviderError::Malformed("no query vector".into()))?;
    let mut ranked = Vec::new();
    for doc in docs {
        for page in doc.pages.iter().filter(|p| judgeable(p)) {
            let e = page.embedding.as_ref().ok_or_else(|| ExtractError::MissingEmbedding {
                doc_id: doc.doc_id.clone(),
                page: page.index,
            })?;
            ranked.push((*doc, page, query.cosine(e)));
        }
    }
    ranked.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then_with(|| a.0.doc_id.cmp(&b.0.doc_id))
            .then_with(|| a.1.index.cmp(&b.1.index))
    });
    ranked.truncate(cfg.k);
    Ok(ranked)
}

pub fn extract_relevant(
    docs: &[&Document],
    cfg: &ExtractorConfig,
    provider: &dyn Provider,
    model: &str,
) -> Result<Extraction, ExtractError> {
    if docs.is_empty() {
        return Err(ExtractError::EmptyInput);
    }
    let candidates: Vec<(&Document, &Page)> = match cfg.mode {
        ExtractMode::TwoStage => rank_candidates(docs, cfg, provider, model)?
            .into_iter()
            .map(|(d, p, _)| (d, p))
            .collect(),
        ExtractMode::Exhaustive => docs
            .iter()
            .flat_map(|d| d.pages.iter().filter(|p| judgeable(p)).map(move |p| (*d, p)))
            .collect(),
    };
    let mut entries = Vec::new();
    for (doc, page) in &candidates {
        let j = provider.judge(model, page, &cfg.extraction_prompt, cfg.tau)?;
        if j.is_relevant() {
            entries.push(PageEntry {
                doc_id: doc.doc_id.clone(),
                page: page.index,
                score: j.score,
                rationale: j.rationale,
                title: doc.metadata.title.clone(),
                text: page.text.clone(),
                image_refs: page.image_refs.clone(),
            });
        }
    }
    Ok(Extraction {
        pages: PageSet::from_entries(entries),
        candidates: candidates.iter().map(|(d, p)| (d.doc_id.clone(), p.index)).collect(),
    })
}
