//! Scent metadata: per-page summaries and embeddings, plus a whole-document
//! summary. Every provider result is cached under a key covering the page
//! content, the provider identity, the model and the prompt template, so
//! re-enriching an unchanged document makes no provider calls.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::content::{clamp_summary, Document, MediaKind, Page};
use crate::embedding::Embedding;
use crate::hash::{canonical_bytes, hash_canonical, ContentHash};
use crate::provider::{prompts, CompletionRequest, ContextItem, CountingProvider, EmbedItem, EmbedMode, Provider};
use crate::store::{CacheLookup, Store};

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichOutcome {
    pub document: Document,
    pub provider_calls: u64,
    /// Non-fatal per-page failures, e.g. `page 3 summary: provider unavailable`.
    pub failures: Vec<String>,
}

/// Embedding mode used for pages of a given media kind.
pub fn embed_mode_for(kind: MediaKind) -> EmbedMode {
    match kind {
        MediaKind::Pdf | MediaKind::Pptx => EmbedMode::Multimodal,
        MediaKind::Image => EmbedMode::Image,
        MediaKind::Text | MediaKind::Html | MediaKind::Docx | MediaKind::Xlsx => EmbedMode::Text,
    }
}

struct Ctx<'a> {
    provider: &'a CountingProvider<'a>,
    model: &'a str,
    store: &'a dyn Store,
}

impl Ctx<'_> {
    fn key(&self, op: &str, material: serde_json::Value) -> ContentHash {
        hash_canonical(&json!({
            "op": op,
            "material": material,
            "provider": {"id": self.provider.id(), "params": self.provider.params()},
            "model": self.model,
            "template": prompts::TEMPLATE_VERSION,
        }))
        .expect("cache key material is plain JSON")
    }

    fn cached<T: Serialize + DeserializeOwned>(
        &self,
        key: ContentHash,
        compute: impl FnOnce() -> Result<T, String>,
    ) -> Result<T, String> {
        if let CacheLookup::Hit { bytes, .. } = self.store.cache_get(&key) {
            if let Ok(v) = serde_json::from_slice(&bytes) {
                return Ok(v);
            }
        }
        let value = compute()?;
        let bytes = canonical_bytes(&value).map_err(|e| e.to_string())?;
        self.store
            .cache_put(&key, &ContentHash::of(&bytes), &bytes)
            .map_err(|e| e.to_string())?;
        Ok(value)
    }
}

fn summarize_request(model: &str, system: &str, prompt: &str, context: Vec<ContextItem>) -> CompletionRequest {
    CompletionRequest {
        model: model.to_string(),
        system: system.to_string(),
        context,
        prompt: prompt.to_string(),
        history: vec![],
    }
}

fn page_summary(ctx: &Ctx<'_>, doc: &Document, page: &Page) -> Result<String, String> {
    let key = ctx.key(
        "page-summary",
        json!({"text": ContentHash::of(page.text.as_bytes()), "system": prompts::PAGE_SUMMARY_SYSTEM, "prompt": prompts::PAGE_SUMMARY_PROMPT}),
    );
    ctx.cached(key, || {
        let item = ContextItem::page(&doc.doc_id, page.index, &doc.metadata.title, &page.text);
        let req = summarize_request(ctx.model, prompts::PAGE_SUMMARY_SYSTEM, prompts::PAGE_SUMMARY_PROMPT, vec![item]);
        ctx.provider.complete(&req).map(|s| clamp_summary(&s)).map_err(|e| e.to_string())
    })
}

fn page_embedding(ctx: &Ctx<'_>, mode: EmbedMode, page: &Page) -> Result<Embedding, String> {
    let key = ctx.key(
        "page-embedding",
        json!({"mode": mode, "text": ContentHash::of(page.text.as_bytes()), "images": page.image_refs}),
    );
    ctx.cached(key, || {
        let mut images = Vec::new();
        if mode != EmbedMode::Text {
            for h in &page.image_refs {
                match ctx.store.get_blob(h) {
                    Ok(Some(b)) => images.push(b),
                    Ok(None) => return Err(format!("image {h} missing")),
                    Err(e) => return Err(e.to_string()),
                }
            }
        }
        let item = EmbedItem { text: page.text.clone(), images };
        let mut out = ctx.provider.embed(ctx.model, mode, &[item]).map_err(|e| e.to_string())?;
        out.pop().ok_or_else(|| "provider returned no vector".to_string())
    })
}

fn doc_summary(ctx: &Ctx<'_>, doc: &Document) -> Result<String, String> {
    let summaries: Vec<(u32, &str)> = doc
        .pages
        .iter()
        .filter_map(|p| p.summary.as_deref().map(|s| (p.index, s)))
        .collect();
    let key = ctx.key(
        "doc-summary",
        json!({"summaries": summaries, "system": prompts::DOC_SUMMARY_SYSTEM, "prompt": prompts::DOC_SUMMARY_PROMPT}),
    );
    ctx.cached(key, || {
        let context = summaries
            .iter()
            .map(|(i, s)| ContextItem {
                reference: format!("summary:{i}"),
                title: doc.metadata.title.clone(),
                text: s.to_string(),
                images: vec![],
            })
            .collect();
        let req = summarize_request(ctx.model, prompts::DOC_SUMMARY_SYSTEM, prompts::DOC_SUMMARY_PROMPT, context);
        ctx.provider.complete(&req).map(|s| clamp_summary(&s)).map_err(|e| e.to_string())
    })
}

/// Adds summaries and embeddings. Pages without text get no summary; pages
/// without text or images get neither. Failures are recorded, not raised.
pub fn enrich(doc: &Document, provider: &dyn Provider, model: &str, store: &dyn Store) -> EnrichOutcome {
    let counting = CountingProvider::new(provider);
    let ctx = Ctx { provider: &counting, model, store };
    let mode = embed_mode_for(doc.media_kind);
    let mut out = doc.clone();
    let mut failures = Vec::new();
    for page in &mut out.pages {
        let has_text = !page.text.trim().is_empty();
        if has_text {
            match page_summary(&ctx, doc, page) {
                Ok(s) => page.summary = Some(s),
                Err(e) => failures.push(format!("page {} summary: {e}", page.index)),
            }
        }
        let embeddable = match mode {
            EmbedMode::Text => has_text,
            EmbedMode::Image => !page.image_refs.is_empty(),
            EmbedMode::Multimodal => has_text || !page.image_refs.is_empty(),
        };
        if embeddable {
            match page_embedding(&ctx, mode, page) {
                Ok(e) => page.embedding = Some(e),
                Err(e) => failures.push(format!("page {} embedding: {e}", page.index)),
            }
        }
    }
    if out.pages.iter().any(|p| p.summary.is_some()) {
        match doc_summary(&ctx, &out) {
            Ok(s) => out.summary = Some(s),
            Err(e) => failures.push(format!("document summary: {e}")),
        }
    }
    EnrichOutcome { document: out, provider_calls: counting.calls(), failures }
}
