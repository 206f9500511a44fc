//! Turning files and URLs into [`Document`]s, enriching them with scent
//! metadata (summaries, embeddings) and answering document-scoped questions.

mod chat;
pub mod chunk;
mod enrich;
mod fetch;
pub mod html;
mod ooxml;
mod pdf;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::content::{DocMetadata, Document, MediaKind, Page};
use crate::hash::ContentHash;
use crate::store::BlobStore;

pub use chat::{scoped_chat, ChatAnswer, ChatError, CHAT_TOP_K, NO_RELEVANT_CONTENT};
pub use enrich::{embed_mode_for, enrich, EnrichOutcome};
pub use fetch::{Fetcher, MAX_BODY_BYTES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("parse error{}: {message}", page.map(|p| format!(" on page {p}")).unwrap_or_default())]
    Parse { page: Option<u32>, message: String },
    #[error("fetch failed with status {0}")]
    Fetch(u16),
    #[error("fetch failed: {0}")]
    Network(String),
    #[error("content type {0:?} is not text or html")]
    NotText(String),
    #[error("body exceeds {0} bytes")]
    TooLarge(u64),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("blob store: {0}")]
    Store(String),
}

/// Adapter output before page numbering and image storage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawDocument {
    pub title: Option<String>,
    pub author: Option<String>,
    pub created_at: Option<String>,
    pub tags: Vec<String>,
    pub pages: Vec<RawPage>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawPage {
    pub text: String,
    pub images: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub document: Document,
    pub warnings: Vec<String>,
}

/// Per-document record written next to the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub doc_id: String,
    pub origin: String,
    pub hash: ContentHash,
    pub media_kind: MediaKind,
    pub title: String,
    pub page_count: usize,
    pub enrichment: EnrichmentStatus,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentStatus {
    pub summarized_pages: usize,
    pub embedded_pages: usize,
    pub document_summary: bool,
    /// `complete`, `partial` or `none`.
    pub status: String,
}

impl EnrichmentStatus {
    pub fn of(doc: &Document) -> Self {
        let summarized = doc.pages.iter().filter(|p| p.summary.is_some()).count();
        let embedded = doc.pages.iter().filter(|p| p.embedding.is_some()).count();
        let status = if doc.pages.is_empty() || (summarized == 0 && embedded == 0 && doc.summary.is_none()) {
            "none"
        } else if embedded == doc.pages.len() && doc.summary.is_some() {
            "complete"
        } else {
            "partial"
        };
        Self {
            summarized_pages: summarized,
            embedded_pages: embedded,
            document_summary: doc.summary.is_some(),
            status: status.to_string(),
        }
    }
}

impl IngestManifest {
    pub fn new(doc: &Document, hash: ContentHash, warnings: Vec<String>) -> Self {
        Self {
            doc_id: doc.doc_id.clone(),
            origin: doc.origin.clone(),
            hash,
            media_kind: doc.media_kind,
            title: doc.metadata.title.clone(),
            page_count: doc.pages.len(),
            enrichment: EnrichmentStatus::of(doc),
            warnings,
        }
    }
}

/// `doc-` followed by the first 16 hex digits of the source bytes' digest.
pub fn doc_id_for(bytes: &[u8]) -> String {
    format!("doc-{}", &ContentHash::of(bytes).to_hex()[..16])
}

fn detect(name: &str, bytes: &[u8]) -> Option<MediaKind> {
    if let Some(kind) = Path::new(name).extension().and_then(|e| e.to_str()).and_then(MediaKind::from_extension) {
        return Some(kind);
    }
    if bytes.starts_with(b"%PDF") {
        Some(MediaKind::Pdf)
    } else if bytes.starts_with(b"\x89PNG") || bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        Some(MediaKind::Image)
    } else {
        None
    }
}

/// Plain text: pages are separated by form feeds.
pub fn text_pages(text: &str) -> Vec<RawPage> {
    let mut parts: Vec<&str> = text.split('\u{c}').collect();
    if parts.len() > 1 && parts.last().is_some_and(|p| p.trim().is_empty()) {
        parts.pop();
    }
    parts.into_iter().map(|t| RawPage { text: t.to_string(), images: vec![] }).collect()
}

fn html_document(bytes: &[u8]) -> (RawDocument, Vec<String>) {
    let src = String::from_utf8_lossy(bytes);
    let main = html::extract_main_text(&src);
    let pages: Vec<RawPage> =
        chunk::chunk_text(&main.text).into_iter().map(|text| RawPage { text, images: vec![] }).collect();
    let mut warnings = Vec::new();
    if pages.is_empty() {
        warnings.push("no main text found; document has 0 pages".to_string());
    }
    (RawDocument { title: main.title, pages, ..RawDocument::default() }, warnings)
}

fn file_stem(name: &str) -> String {
    let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
    let base = base.split(['?', '#']).next().unwrap_or(base);
    match base.rsplit_once('.') {
        Some((stem, _)) if !stem.is_empty() => stem.to_string(),
        _ if !base.is_empty() => base.to_string(),
        _ => name.to_string(),
    }
}

/// Parses `bytes` with the adapter for `media_kind` (detected from `name`
/// and magic bytes when `None`) and stores extracted images in `blobs`.
pub fn ingest_bytes(
    origin: &str,
    name: &str,
    bytes: &[u8],
    media_kind: Option<MediaKind>,
    blobs: &dyn BlobStore,
) -> Result<Ingested, IngestError> {
    if bytes.is_empty() {
        return Err(IngestError::Parse { page: None, message: "empty file".into() });
    }
    let kind = media_kind
        .or_else(|| detect(name, bytes))
        .ok_or_else(|| IngestError::UnsupportedFormat(name.to_string()))?;
    let mut warnings = Vec::new();
    let raw = match kind {
        MediaKind::Text => {
            let text = std::str::from_utf8(bytes)
                .map_err(|e| IngestError::Parse { page: None, message: format!("not utf-8: {e}") })?;
            RawDocument { pages: text_pages(text), ..RawDocument::default() }
        }
        MediaKind::Html => {
            let (raw, w) = html_document(bytes);
            warnings.extend(w);
            raw
        }
        MediaKind::Pdf => pdf::pdf(bytes)?,
        MediaKind::Docx => ooxml::docx(bytes)?,
        MediaKind::Pptx => ooxml::pptx(bytes)?,
        MediaKind::Xlsx => ooxml::xlsx(bytes)?,
        MediaKind::Image => RawDocument {
            pages: vec![RawPage { text: String::new(), images: vec![bytes.to_vec()] }],
            ..RawDocument::default()
        },
    };
    let mut pages = Vec::with_capacity(raw.pages.len());
    for (i, rp) in raw.pages.into_iter().enumerate() {
        let mut page = Page::new(i as u32 + 1, rp.text);
        for img in rp.images {
            page.image_refs.push(blobs.put_blob(&img).map_err(|e| IngestError::Store(e.to_string()))?);
        }
        pages.push(page);
    }
    let title = raw.title.filter(|t| !t.trim().is_empty()).unwrap_or_else(|| file_stem(name));
    let document = Document {
        doc_id: doc_id_for(bytes),
        origin: origin.to_string(),
        media_kind: kind,
        metadata: DocMetadata {
            title,
            author: raw.author,
            created_at: raw.created_at,
            page_count: pages.len(),
            tags: raw.tags,
        },
        pages,
        summary: None,
    };
    Ok(Ingested { document, warnings })
}

pub fn ingest_file(path: &Path, media_kind: Option<MediaKind>, blobs: &dyn BlobStore) -> Result<Ingested, IngestError> {
    let bytes = std::fs::read(path)
        .map_err(|e| IngestError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let name = path.to_string_lossy();
    ingest_bytes(&name, &name, &bytes, media_kind, blobs)
}

/// Fetches a single URL (HTTP 200, html or plain text) and ingests it.
pub fn ingest_url(url: &str, fetcher: &Fetcher, blobs: &dyn BlobStore) -> Result<Ingested, IngestError> {
    let fetched = fetcher.fetch(url)?;
    let kind = if fetched.content_type.contains("html") { MediaKind::Html } else { MediaKind::Text };
    if fetched.body.is_empty() {
        let document = Document::from_pages(doc_id_for(url.as_bytes()), url, kind, file_stem(url), vec![]);
        return Ok(Ingested { document, warnings: vec!["empty body; document has 0 pages".into()] });
    }
    let mut out = ingest_bytes(url, url, &fetched.body, Some(kind), blobs)?;
    if kind == MediaKind::Text {
        // Fetched text is chunked like html rather than split on form feeds.
        let text: String = out.document.pages.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\u{c}");
        let pages: Vec<Page> =
            chunk::chunk_text(&text).into_iter().enumerate().map(|(i, t)| Page::new(i as u32 + 1, t)).collect();
        out.document.metadata.page_count = pages.len();
        out.document.pages = pages;
    }
    Ok(out)
}

/// Stores the canonical form of `doc` as a blob; source nodes reference
/// documents by the returned hash.
pub fn store_document(doc: &Document, blobs: &dyn BlobStore) -> Result<ContentHash, IngestError> {
    let bytes = crate::content::canonicalize(&crate::content::Content::Document(doc.clone()))
        .map_err(|e| IngestError::Parse { page: None, message: e.to_string() })?;
    blobs.put_blob(&bytes).map_err(|e| IngestError::Store(e.to_string()))
}
