//! Values that flow along workflow edges: ingested documents, page sets,
//! the three editable plan representations, and exported artifacts.
//!
//! All content is immutable once built. [`canonicalize`] validates a value
//! and produces the bytes its [`ContentHash`] is taken over.

mod patch;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::hash::{self, ContentHash};

pub use patch::{apply_patch, MoveTarget, PatchError, PatchOp, Plan, PlanPatch};

/// Maximum length, in characters, of page and document summaries.
pub const SUMMARY_MAX_CHARS: usize = 480;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContentError {
    #[error("invalid content at {path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("malformed content: {0}")]
    Malformed(String),
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ContentError {
    ContentError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

/// The kind of value carried on an edge. Used for port typing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContentKind {
    #[serde(rename = "document")]
    Document,
    #[serde(rename = "page-set")]
    PageSet,
    #[serde(rename = "plan:document")]
    DocumentPlan,
    #[serde(rename = "plan:slides")]
    SlideDeckPlan,
    #[serde(rename = "plan:table")]
    TablePlan,
    #[serde(rename = "artifact")]
    Artifact,
}

impl fmt::Display for ContentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContentKind::Document => "document",
            ContentKind::PageSet => "page-set",
            ContentKind::DocumentPlan => "plan:document",
            ContentKind::SlideDeckPlan => "plan:slides",
            ContentKind::TablePlan => "plan:table",
            ContentKind::Artifact => "artifact",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Pdf,
    Docx,
    Pptx,
    Xlsx,
    Html,
    Text,
    Image,
}

impl MediaKind {
    pub fn from_extension(ext: &str) -> Option<Self> {
        Some(match ext.to_ascii_lowercase().as_str() {
            "pdf" => MediaKind::Pdf,
            "docx" => MediaKind::Docx,
            "pptx" => MediaKind::Pptx,
            "xlsx" => MediaKind::Xlsx,
            "html" | "htm" => MediaKind::Html,
            "txt" | "text" | "md" => MediaKind::Text,
            "png" | "jpg" | "jpeg" | "gif" => MediaKind::Image,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MediaKind::Pdf => "pdf",
            MediaKind::Docx => "docx",
            MediaKind::Pptx => "pptx",
            MediaKind::Xlsx => "xlsx",
            MediaKind::Html => "html",
            MediaKind::Text => "text",
            MediaKind::Image => "image",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocMetadata {
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    pub page_count: usize,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    /// 1-based.
    pub index: u32,
    pub text: String,
    #[serde(default)]
    pub image_refs: Vec<ContentHash>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Embedding>,
}

impl Page {
    pub fn new(index: u32, text: impl Into<String>) -> Self {
        Self {
            index,
            text: text.into(),
            image_refs: Vec::new(),
            summary: None,
            embedding: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub origin: String,
    pub media_kind: MediaKind,
    pub metadata: DocMetadata,
    pub pages: Vec<Page>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

impl Document {
    /// Builds a document from page texts, numbering pages from 1.
    pub fn from_pages(
        doc_id: impl Into<String>,
        origin: impl Into<String>,
        media_kind: MediaKind,
        title: impl Into<String>,
        pages: Vec<Page>,
    ) -> Self {
        let pages: Vec<Page> = pages
            .into_iter()
            .enumerate()
            .map(|(i, mut p)| {
                p.index = i as u32 + 1;
                p
            })
            .collect();
        Self {
            doc_id: doc_id.into(),
            origin: origin.into(),
            media_kind,
            metadata: DocMetadata {
                title: title.into(),
                author: None,
                created_at: None,
                page_count: pages.len(),
                tags: Vec::new(),
            },
            pages,
            summary: None,
        }
    }

    pub fn page(&self, index: u32) -> Option<&Page> {
        index
            .checked_sub(1)
            .and_then(|i| self.pages.get(i as usize))
    }

    pub fn validate(&self) -> Result<(), ContentError> {
        if self.doc_id.trim().is_empty() {
            return Err(invalid("doc_id", "empty"));
        }
        if self.metadata.page_count != self.pages.len() {
            return Err(invalid(
                "metadata.page_count",
                format!("{} != {} pages", self.metadata.page_count, self.pages.len()),
            ));
        }
        check_summary("summary", self.summary.as_deref())?;
        for (i, page) in self.pages.iter().enumerate() {
            let path = format!("pages[{i}]");
            if page.index as usize != i + 1 {
                return Err(invalid(
                    format!("{path}.index"),
                    format!("expected {}, found {}", i + 1, page.index),
                ));
            }
            check_summary(&format!("{path}.summary"), page.summary.as_deref())?;
            if let Some(e) = &page.embedding {
                e.check()
                    .map_err(|r| invalid(format!("{path}.embedding"), r))?;
            }
        }
        Ok(())
    }
}

fn check_summary(path: &str, summary: Option<&str>) -> Result<(), ContentError> {
    match summary {
        Some(s) if s.chars().count() > SUMMARY_MAX_CHARS => Err(invalid(
            path,
            format!("summary longer than {SUMMARY_MAX_CHARS} characters"),
        )),
        _ => Ok(()),
    }
}

/// Truncates to at most [`SUMMARY_MAX_CHARS`] characters.
pub fn clamp_summary(s: &str) -> String {
    s.chars().take(SUMMARY_MAX_CHARS).collect()
}

/// One selected page. Carries a snapshot of the page text so downstream
/// planners depend only on the page set's own hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageEntry {
    pub doc_id: String,
    pub page: u32,
    pub score: f64,
    pub rationale: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub image_refs: Vec<ContentHash>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PageSet {
    pub entries: Vec<PageEntry>,
}

fn entry_order(a: &PageEntry, b: &PageEntry) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
        .then_with(|| a.page.cmp(&b.page))
}

impl PageSet {
    /// Sorts by score descending, then doc id, then page, and drops
    /// duplicate `(doc_id, page)` pairs keeping the best-scored one.
    pub fn from_entries(mut entries: Vec<PageEntry>) -> Self {
        entries.sort_by(entry_order);
        let mut seen = BTreeSet::new();
        entries.retain(|e| seen.insert((e.doc_id.clone(), e.page)));
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> BTreeSet<(String, u32)> {
        self.entries
            .iter()
            .map(|e| (e.doc_id.clone(), e.page))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ContentError> {
        let mut seen = BTreeSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            let path = format!("entries[{i}]");
            if !e.score.is_finite() || !(0.0..=1.0).contains(&e.score) {
                return Err(invalid(format!("{path}.score"), "must be finite in [0,1]"));
            }
            if !seen.insert((e.doc_id.as_str(), e.page)) {
                return Err(invalid(path, "duplicate (doc_id, page)"));
            }
            if i > 0 && entry_order(&self.entries[i - 1], e) == std::cmp::Ordering::Greater {
                return Err(invalid(path, "entries out of order"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Block {
    Paragraph { text: String },
    BulletList { items: Vec<String> },
    TableRef { table: String },
    ImageRef { hash: ContentHash },
    Citation { doc_id: String, page: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DocumentPlan {
    pub sections: Vec<Section>,
}

impl DocumentPlan {
    pub fn validate(&self) -> Result<(), ContentError> {
        for (i, s) in self.sections.iter().enumerate() {
            if s.heading.trim().is_empty() {
                return Err(invalid(format!("sections[{i}].heading"), "empty heading"));
            }
        }
        Ok(())
    }

    pub fn citations(&self) -> impl Iterator<Item = (&str, u32)> {
        self.sections.iter().flat_map(|s| {
            s.blocks.iter().filter_map(|b| match b {
                Block::Citation { doc_id, page } => Some((doc_id.as_str(), *page)),
                _ => None,
            })
        })
    }

    /// Checks that every citation names a page present in `sources`.
    pub fn validate_citations(&self, sources: &[&PageSet]) -> Result<(), ContentError> {
        let known: BTreeSet<(String, u32)> = sources.iter().flat_map(|p| p.keys()).collect();
        for (si, s) in self.sections.iter().enumerate() {
            for (bi, b) in s.blocks.iter().enumerate() {
                if let Block::Citation { doc_id, page } = b {
                    if !known.contains(&(doc_id.clone(), *page)) {
                        return Err(invalid(
                            format!("sections[{si}].blocks[{bi}]"),
                            format!("citation {doc_id} p.{page} not in input page sets"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SlotState {
    Empty,
    Sourced {
        hash: ContentHash,
    },
    Generated {
        hash: ContentHash,
        prompt: String,
    },
    Restyled {
        hash: ContentHash,
        source_hash: ContentHash,
        prompt: String,
    },
}

impl SlotState {
    pub fn image(&self) -> Option<&ContentHash> {
        match self {
            SlotState::Empty => None,
            SlotState::Sourced { hash }
            | SlotState::Generated { hash, .. }
            | SlotState::Restyled { hash, .. } => Some(hash),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSlot {
    pub slot_id: String,
    #[serde(flatten)]
    pub state: SlotState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slide {
    pub title: String,
    pub blocks: Vec<Block>,
    #[serde(default)]
    pub image_slots: Vec<ImageSlot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl Slide {
    pub fn slot(&self, slot_id: &str) -> Option<&ImageSlot> {
        self.image_slots.iter().find(|s| s.slot_id == slot_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlideDeckPlan {
    pub slides: Vec<Slide>,
}

impl SlideDeckPlan {
    pub fn validate(&self) -> Result<(), ContentError> {
        for (i, slide) in self.slides.iter().enumerate() {
            let mut ids = BTreeSet::new();
            for (j, slot) in slide.image_slots.iter().enumerate() {
                if slot.slot_id.is_empty() {
                    return Err(invalid(format!("slides[{i}].image_slots[{j}]"), "empty slot id"));
                }
                if !ids.insert(slot.slot_id.as_str()) {
                    return Err(invalid(
                        format!("slides[{i}].image_slots[{j}]"),
                        format!("duplicate slot id {}", slot.slot_id),
                    ));
                }
            }
            for (j, b) in slide.blocks.iter().enumerate() {
                if !matches!(b, Block::Paragraph { .. } | Block::BulletList { .. }) {
                    return Err(invalid(
                        format!("slides[{i}].blocks[{j}]"),
                        "slides hold only paragraphs and bullet lists",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Every image hash referenced by any slot, including restyle sources.
    pub fn image_hashes(&self) -> BTreeSet<ContentHash> {
        let mut out = BTreeSet::new();
        for slot in self.slides.iter().flat_map(|s| &s.image_slots) {
            match &slot.state {
                SlotState::Empty => {}
                SlotState::Sourced { hash } | SlotState::Generated { hash, .. } => {
                    out.insert(*hash);
                }
                SlotState::Restyled {
                    hash, source_hash, ..
                } => {
                    out.insert(*hash);
                    out.insert(*source_hash);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Text,
    Number,
    Currency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub column_type: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Text(String),
    Number(f64),
    /// Decimal amount kept as text plus an ISO-4217 style code.
    Currency { amount: String, code: String },
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    /// Plain display form used by exporters.
    pub fn display(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Number(n) => {
                if n.fract() == 0.0 && n.abs() < 1e15 {
                    format!("{}", *n as i64)
                } else {
                    format!("{n}")
                }
            }
            Cell::Currency { amount, .. } => amount.clone(),
        }
    }
}

/// Rows `start..end` (half-open) grouped under a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowGroup {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TablePlan {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<RowGroup>>,
}

pub(crate) fn is_decimal(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let mut parts = digits.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

impl TablePlan {
    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), ContentError> {
        if self.columns.is_empty() {
            return Err(invalid("columns", "no columns"));
        }
        for (i, c) in self.columns.iter().enumerate() {
            if c.name.trim().is_empty() {
                return Err(invalid(format!("columns[{i}].name"), "empty column name"));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(invalid(
                    format!("rows[{r}]"),
                    format!("{} cells for {} columns", row.len(), self.columns.len()),
                ));
            }
            for (c, cell) in row.iter().enumerate() {
                let path = format!("rows[{r}][{c}]");
                match cell {
                    Cell::Number(n) if !n.is_finite() => {
                        return Err(invalid(path, "non-finite number"));
                    }
                    Cell::Currency { amount, code } => {
                        if code.len() != 3 || !code.bytes().all(|b| b.is_ascii_uppercase()) {
                            return Err(invalid(path, format!("bad currency code {code:?}")));
                        }
                        if !is_decimal(amount) {
                            return Err(invalid(path, format!("bad decimal amount {amount:?}")));
                        }
                    }
                    _ => {}
                }
            }
        }
        if let Some(groups) = &self.groups {
            for (i, g) in groups.iter().enumerate() {
                if g.start > g.end || g.end > self.rows.len() {
                    return Err(invalid(
                        format!("groups[{i}]"),
                        format!("range {}..{} outside {} rows", g.start, g.end, self.rows.len()),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// What a builder node hands downstream: the exported files, each stored
/// as a blob. `manifest.json` is always among them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportArtifact {
    pub format: String,
    pub files: BTreeMap<String, ContentHash>,
}

impl ExportArtifact {
    pub fn validate(&self) -> Result<(), ContentError> {
        if !self.files.contains_key("manifest.json") {
            return Err(invalid("files", "missing manifest.json"));
        }
        for name in self.files.keys() {
            if name.is_empty() || name.starts_with('/') || name.split('/').any(|p| p == "..") {
                return Err(invalid("files", format!("unsafe file name {name:?}")));
            }
        }
        Ok(())
    }
}

/// Any value carried on an edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum Content {
    #[serde(rename = "document")]
    Document(Document),
    #[serde(rename = "page-set")]
    PageSet(PageSet),
    #[serde(rename = "plan:document")]
    DocumentPlan(DocumentPlan),
    #[serde(rename = "plan:slides")]
    SlideDeckPlan(SlideDeckPlan),
    #[serde(rename = "plan:table")]
    TablePlan(TablePlan),
    #[serde(rename = "artifact")]
    Artifact(ExportArtifact),
}

impl Content {
    pub fn kind(&self) -> ContentKind {
        match self {
            Content::Document(_) => ContentKind::Document,
            Content::PageSet(_) => ContentKind::PageSet,
            Content::DocumentPlan(_) => ContentKind::DocumentPlan,
            Content::SlideDeckPlan(_) => ContentKind::SlideDeckPlan,
            Content::TablePlan(_) => ContentKind::TablePlan,
            Content::Artifact(_) => ContentKind::Artifact,
        }
    }

    pub fn validate(&self) -> Result<(), ContentError> {
        match self {
            Content::Document(d) => d.validate(),
            Content::PageSet(p) => p.validate(),
            Content::DocumentPlan(p) => p.validate(),
            Content::SlideDeckPlan(p) => p.validate(),
            Content::TablePlan(p) => p.validate(),
            Content::Artifact(a) => a.validate(),
        }
    }

    pub fn hash(&self) -> Result<ContentHash, ContentError> {
        Ok(ContentHash::of(&canonicalize(self)?))
    }

    pub fn into_plan(self) -> Option<Plan> {
        match self {
            Content::DocumentPlan(p) => Some(Plan::Document(p)),
            Content::SlideDeckPlan(p) => Some(Plan::Slides(p)),
            Content::TablePlan(p) => Some(Plan::Table(p)),
            _ => None,
        }
    }
}

impl From<Plan> for Content {
    fn from(p: Plan) -> Self {
        match p {
            Plan::Document(p) => Content::DocumentPlan(p),
            Plan::Slides(p) => Content::SlideDeckPlan(p),
            Plan::Table(p) => Content::TablePlan(p),
        }
    }
}

/// Validates `content` and returns its canonical bytes.
pub fn canonicalize(content: &Content) -> Result<Vec<u8>, ContentError> {
    content.validate()?;
    hash::canonical_bytes(content).map_err(|e| ContentError::Malformed(e.to_string()))
}

/// Parses and validates canonical (or any well-formed) content bytes.
pub fn parse_content(bytes: &[u8]) -> Result<Content, ContentError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let content: Content = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        invalid(e.path().to_string(), e.inner().to_string())
    })?;
    content.validate()?;
    Ok(content)
}
