//! Question answering restricted to a single document.

use serde::{Deserialize, Serialize};

use super::embed_mode_for;
use crate::content::Document;
use crate::provider::{prompts, ChatTurn, CompletionRequest, ContextItem, EmbedItem, Provider, ProviderError};

/// Number of pages retrieved per question.
pub const CHAT_TOP_K: usize = 4;

pub const NO_RELEVANT_CONTENT: &str = "no relevant content";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatAnswer {
    pub answer: String,
    /// Pages whose text was given to the provider, ascending.
    pub cited_pages: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChatError {
    #[error("document has no pages")]
    NoContent,
    #[error("page {0} has no embedding; enrich the document first")]
    NotEnriched(u32),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Retrieves the top pages of `doc` by cosine similarity to the question,
/// keeps those the provider judges relevant at `threshold`, and answers from
/// them alone. Context never contains another document's text.
pub fn scoped_chat(
    doc: &Document,
    question: &str,
    history: &[ChatTurn],
    provider: &dyn Provider,
    model: &str,
    threshold: f64,
) -> Result<ChatAnswer, ChatError> {
    if doc.pages.is_empty() {
        return Err(ChatError::NoContent);
    }
    let mode = embed_mode_for(doc.media_kind);
    let query = provider
        .embed(model, mode, &[EmbedItem::text(question)])?
        .pop()
        .ok_or_else(|| ProviderError::Malformed("no query vector".into()))?;
    let mut ranked = Vec::new();
    for page in &doc.pages {
        let e = page.embedding.as_ref().ok_or(ChatError::NotEnriched(page.index))?;
        ranked.push((query.cosine(e), page));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.index.cmp(&b.1.index)));
    let mut context = Vec::new();
    for (_, page) in ranked.into_iter().take(CHAT_TOP_K) {
        if page.text.trim().is_empty() && page.image_refs.is_empty() {
            continue;
        }
        if provider.judge(model, page, question, threshold)?.is_relevant() {
            context.push(page);
        }
    }
    if context.is_empty() {
        return Ok(ChatAnswer { answer: NO_RELEVANT_CONTENT.into(), cited_pages: vec![] });
    }
    context.sort_by_key(|p| p.index);
    let req = CompletionRequest {
        model: model.to_string(),
        system: prompts::CHAT_SYSTEM.to_string(),
        context: context
            .iter()
            .map(|p| ContextItem::page(&doc.doc_id, p.index, &doc.metadata.title, &p.text))
            .collect(),
        prompt: question.to_string(),
        history: history.to_vec(),
    };
    let answer = provider.complete(&req)?;
    let cited_pages = if answer.trim() == NO_RELEVANT_CONTENT { vec![] } else { context.iter().map(|p| p.index).collect() };
    Ok(ChatAnswer { answer, cited_pages })
}
