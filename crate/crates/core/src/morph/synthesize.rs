//! Workflow synthesis: a goal statement and a triaged source list become
//! an initial graph by fixed template instantiation.
//!
//! Intent keyword map (goal tokens, case-insensitive):
//!
//! | intent   | keywords                                                           |
//! |----------|--------------------------------------------------------------------|
//! | table    | budget, cost(s), estimate, expense(s), logistics, price(s), spreadsheet, table |
//! | document | document, guide, itinerary, notes, overview, report, summary        |
//! | slides   | deck, presentation, slide, slides                                  |
//!
//! Branches are created in the order table, document, slides; a goal with
//! no keyword gets a single document branch. Every effective-relevant
//! source gets one source node, shared by all branches. A branch is
//! `sources -> RelevantPageExtractor -> PagePreview -> Planner -> Viewer`.
//!
//! The document and slides extractors judge the top `k` pages against the
//! conversation's preference prompt (or the goal when none was stated).
//! The table extractor judges every page against
//! [`LOGISTICS_EXTRACTION_PROMPT`] plus the preference sentences that
//! exclude something.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::content::{Content, Document};
use crate::graph::{Config, GraphError, NodeId, NodeKind, WorkflowGraph};
use crate::morph::extract::DEFAULT_K;
use crate::morph::triage::SourceTriage;
use crate::provider::text::{split_sentences, tokenize, NEGATION_CUES};

pub const TABLE_PLANNING_PROMPT: &str =
    "Draft a cost table with columns: Item, Estimated Cost (USD), and Notes. Use categories like Flights, Hotel, Food, and Activities when they apply.";

/// Extraction prompt of the table branch; the conversation's exclusions
/// are appended to it.
pub const LOGISTICS_EXTRACTION_PROMPT: &str = "Extract pages with details on flights, hotel, food, activities, conference dates, and expenses.";

const TABLE_WORDS: &[&str] = &[
    "budget", "cost", "costs", "estimate", "expense", "expenses", "logistics", "price", "prices", "spreadsheet", "table",
];
const DOCUMENT_WORDS: &[&str] = &["document", "guide", "itinerary", "notes", "overview", "report", "summary"];
const SLIDES_WORDS: &[&str] = &["deck", "presentation", "slide", "slides"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Intent {
    Table,
    Document,
    Slides,
}

impl Intent {
    fn chain(&self) -> (NodeKind, NodeKind) {
        match self {
            Intent::Table => (NodeKind::SpreadsheetPlanner, NodeKind::SpreadsheetViewer),
            Intent::Document => (NodeKind::DocumentPlanner, NodeKind::DocumentEditor),
            Intent::Slides => (NodeKind::SlideDeckPlanner, NodeKind::SlideDeckViewer),
        }
    }

    fn planning_prompt(&self, goal: &str) -> String {
        match self {
            Intent::Table => TABLE_PLANNING_PROMPT.to_string(),
            Intent::Document => format!("Write a document for this goal: {}", goal.trim()),
            Intent::Slides => format!("Create a slide deck for this goal: {}", goal.trim()),
        }
    }
}

/// Intents detected in `goal`, in branch order; never empty.
pub fn detect_intents(goal: &str) -> Vec<Intent> {
    let tokens = tokenize(goal);
    let has = |words: &[&str]| tokens.iter().any(|t| words.contains(&t.as_str()));
    let mut out = Vec::new();
    if has(TABLE_WORDS) {
        out.push(Intent::Table);
    }
    if has(DOCUMENT_WORDS) {
        out.push(Intent::Document);
    }
    if has(SLIDES_WORDS) {
        out.push(Intent::Slides);
    }
    if out.is_empty() {
        out.push(Intent::Document);
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthesisError {
    #[error("no relevant sources")]
    NoRelevantSources,
    #[error("document {0} was triaged but not supplied")]
    MissingDocument(String),
    #[error("document {doc_id}: {message}")]
    Document { doc_id: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn config(entries: &[(&str, Value)]) -> Config {
    entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn place(graph: &mut WorkflowGraph, id: NodeId, column: usize, row: usize) {
    graph
        .metadata
        .layout
        .insert(id.0.to_string(), json!({"x": column * 260, "y": row * 140}));
}

/// `docs` must hold every effective-relevant document of `triage`, already
/// stored under its canonical hash (see `ingest::store_document`).
pub fn synthesize_workflow(goal: &str, triage: &SourceTriage, docs: &[&Document]) -> Result<WorkflowGraph, SynthesisError> {
    let relevant: Vec<&str> = triage.relevant().collect();
    if relevant.is_empty() {
        return Err(SynthesisError::NoRelevantSources);
    }
    let by_id: BTreeMap<&str, &Document> = docs.iter().map(|d| (d.doc_id.as_str(), *d)).collect();
    let mut graph = WorkflowGraph::new(goal.trim());
    let mut sources = Vec::new();
    for (row, doc_id) in relevant.iter().enumerate() {
        let doc = by_id
            .get(doc_id)
            .ok_or_else(|| SynthesisError::MissingDocument(doc_id.to_string()))?;
        let hash = Content::Document((*doc).clone())
            .hash()
            .map_err(|e| SynthesisError::Document { doc_id: doc_id.to_string(), message: e.to_string() })?;
        let is_url = doc.origin.starts_with("http://") || doc.origin.starts_with("https://");
        let (kind, origin_key) = if is_url { (NodeKind::UrlSource, "url") } else { (NodeKind::FileSource, "path") };
        let id = graph.add_node(kind, config(&[("document", json!(hash.to_hex())), (origin_key, json!(doc.origin))]))?;
        place(&mut graph, id, 0, row);
        sources.push(id);
    }
    let extraction_prompt = if triage.preference_prompt.trim().is_empty() {
        goal.trim().to_string()
    } else {
        triage.preference_prompt.clone()
    };
    let exclusions: Vec<String> = split_sentences(&triage.preference_prompt)
        .into_iter()
        .filter(|s| tokenize(s).iter().any(|t| NEGATION_CUES.contains(&t.as_str())))
        .collect();
    let logistics_prompt = std::iter::once(LOGISTICS_EXTRACTION_PROMPT.to_string())
        .chain(exclusions)
        .collect::<Vec<_>>()
        .join(" ");
    for (row, intent) in detect_intents(goal).into_iter().enumerate() {
        let (mode, prompt) = match intent {
            Intent::Table => ("exhaustive", &logistics_prompt),
            _ => ("two_stage", &extraction_prompt),
        };
        let extractor = graph.add_node(
            NodeKind::RelevantPageExtractor,
            config(&[
                ("extraction_prompt", json!(prompt)),
                ("mode", json!(mode)),
                ("k", json!(DEFAULT_K)),
            ]),
        )?;
        for &s in &sources {
            graph.connect(s, extractor, 0)?;
        }
        let preview = graph.add_node(NodeKind::PagePreview, Config::new())?;
        graph.connect(extractor, preview, 0)?;
        let (planner_kind, viewer_kind) = intent.chain();
        let planner =
            graph.add_node(planner_kind, config(&[("planning_prompt", json!(intent.planning_prompt(goal)))]))?;
        graph.connect(preview, planner, 0)?;
        let viewer = graph.add_node(viewer_kind, Config::new())?;
        graph.connect(planner, viewer, 0)?;
        for (column, id) in [extractor, preview, planner, viewer].into_iter().enumerate() {
            place(&mut graph, id, column + 1, row);
        }
    }
    graph.validate().map_err(|(_, e)| e)?;
    Ok(graph)
}
