//! Source triage: one relevance label per document, judged against a
//! preference prompt assembled from the user's side of a conversation.
//!
//! The preference prompt is every user sentence containing a preference
//! cue (see [`PREFERENCE_CUES`]), in order, joined by spaces. With no such
//! sentence every document is labeled relevant with rationale
//! [`NO_CONSTRAINTS`]. Otherwise each document's full text is judged once.

use serde::{Deserialize, Serialize};

use crate::content::{Document, Page};
use crate::provider::text::{split_sentences, tokenize};
use crate::provider::{ChatTurn, Provider, ProviderError, Verdict, DEFAULT_JUDGE_THRESHOLD};

pub const NO_CONSTRAINTS: &str = "no constraints stated";

pub const PREFERENCE_CUES: &[&str] = &[
    "avoid", "enjoy", "exclude", "focus", "interested", "like", "looking", "love", "prefer", "skip", "want",
    "without",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageEntry {
    pub doc_id: String,
    pub title: String,
    pub label: Verdict,
    pub score: f64,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_override: Option<Verdict>,
}

impl TriageEntry {
    pub fn effective(&self) -> Verdict {
        self.user_override.unwrap_or(self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTriage {
    pub preference_prompt: String,
    pub entries: Vec<TriageEntry>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TriageError {
    #[error("no documents to triage")]
    NoDocuments,
    #[error("no document is enriched")]
    NotEnriched,
    #[error("unknown document {0}")]
    UnknownDocument(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl SourceTriage {
    pub fn entry(&self, doc_id: &str) -> Option<&TriageEntry> {
        self.entries.iter().find(|e| e.doc_id == doc_id)
    }

    /// Sets (or with `None` clears) the user's label for one document.
    pub fn set_override(&mut self, doc_id: &str, label: Option<Verdict>) -> Result<(), TriageError> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.doc_id == doc_id)
            .ok_or_else(|| TriageError::UnknownDocument(doc_id.to_string()))?;
        entry.user_override = label;
        Ok(())
    }

    /// Documents whose effective label is relevant, in triage order.
    pub fn relevant(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| e.effective() == Verdict::Relevant)
            .map(|e| e.doc_id.as_str())
    }
}

/// Parses a transcript of `role: text` lines. Lines without a role prefix
/// continue the previous turn; a transcript with no prefix at all is one
/// user turn.
pub fn parse_transcript(text: &str) -> Vec<ChatTurn> {
    let mut turns: Vec<ChatTurn> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let role = line.split_once(':').and_then(|(r, rest)| {
            let r = r.trim().to_lowercase();
            matches!(r.as_str(), "user" | "assistant" | "system").then(|| (r, rest.trim().to_string()))
        });
        match (role, turns.last_mut()) {
            (Some((role, text)), _) => turns.push(ChatTurn { role, text }),
            (None, Some(last)) => {
                last.text.push('\n');
                last.text.push_str(line);
            }
            (None, None) => turns.push(ChatTurn { role: "user".into(), text: line.to_string() }),
        }
    }
    turns
}

pub fn preference_prompt(conversation: &[ChatTurn]) -> String {
    conversation
        .iter()
        .filter(|t| t.role == "user")
        .flat_map(|t| split_sentences(&t.text))
        .filter(|s| tokenize(s).iter().any(|w| PREFERENCE_CUES.contains(&w.as_str())))
        .collect::<Vec<_>>()
        .join(" ")
}

fn full_text(doc: &Document) -> String {
    doc.pages.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n")
}

pub fn triage_sources(
    conversation: &[ChatTurn],
    docs: &[&Document],
    provider: &dyn Provider,
    model: &str,
) -> Result<SourceTriage, TriageError> {
    if docs.is_empty() {
        return Err(TriageError::NoDocuments);
    }
    if !docs.iter().any(|d| d.summary.is_some() || d.pages.iter().any(|p| p.embedding.is_some())) {
        return Err(TriageError::NotEnriched);
    }
    let prompt = preference_prompt(conversation);
    let mut entries = Vec::new();
    for doc in docs {
        let (label, score, rationale) = if prompt.is_empty() {
            (Verdict::Relevant, 1.0, NO_CONSTRAINTS.to_string())
        } else {
            let mut page = Page::new(1, full_text(doc));
            page.image_refs = doc.pages.iter().flat_map(|p| p.image_refs.iter().copied()).collect();
            if page.text.trim().is_empty() && page.image_refs.is_empty() {
                (Verdict::Irrelevant, 0.0, "document has no content".to_string())
            } else {
                let j = provider.judge(model, &page, &prompt, DEFAULT_JUDGE_THRESHOLD)?;
                (j.verdict, j.score, j.rationale)
            }
        };
        entries.push(TriageEntry {
            doc_id: doc.doc_id.clone(),
            title: doc.metadata.title.clone(),
            label,
            score,
            rationale,
            user_override: None,
        });
    }
    Ok(SourceTriage { preference_prompt: prompt, entries })
}
