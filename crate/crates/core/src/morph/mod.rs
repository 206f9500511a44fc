//! The standard evaluators, one per node kind, plus the operations they
//! are built from: relevant-page extraction, planning, plan editing,
//! building, image operations, source triage and workflow synthesis.

pub mod build;
pub mod extract;
pub mod image_op;
pub mod plan;
pub mod synthesize;
pub mod triage;

use std::sync::Arc;

use serde_json::Value;

use crate::content::{apply_patch, parse_content, Content, Document, PageEntry, PageSet, PlanPatch};
use crate::graph::{EvalContext, EvalError, Evaluated, Evaluator, NodeKind, Registry};
use crate::hash::ContentHash;

pub use build::{build, BuildError, BuildOptions, Template};
pub use extract::{extract_relevant, ExtractMode, ExtractorConfig, Extraction};
pub use image_op::{image_op, ImageOp, ImageOpError, ImageOpOutcome};
pub use plan::{plan, PlanError, PlanKind, PlanOutcome};
pub use synthesize::{
    detect_intents, synthesize_workflow, Intent, SynthesisError, LOGISTICS_EXTRACTION_PROMPT, TABLE_PLANNING_PROMPT,
};
pub use triage::{parse_transcript, preference_prompt, triage_sources, SourceTriage, TriageEntry, TriageError, NO_CONSTRAINTS};

/// A registry with an evaluator for every node kind.
pub fn standard_registry() -> Registry {
    let mut r = Registry::new();
    r.register(NodeKind::FileSource, Arc::new(SourceEval));
    r.register(NodeKind::UrlSource, Arc::new(SourceEval));
    r.register(NodeKind::PagePreview, Arc::new(PreviewEval));
    r.register(NodeKind::RelevantPageExtractor, Arc::new(ExtractorEval));
    r.register(NodeKind::DocumentPlanner, Arc::new(PlannerEval(PlanKind::Document)));
    r.register(NodeKind::SlideDeckPlanner, Arc::new(PlannerEval(PlanKind::Slides)));
    r.register(NodeKind::SpreadsheetPlanner, Arc::new(PlannerEval(PlanKind::Table)));
    for kind in [NodeKind::DocumentEditor, NodeKind::SlideDeckViewer, NodeKind::SpreadsheetViewer] {
        r.register(kind, Arc::new(ViewerEval));
    }
    for kind in [NodeKind::DocumentBuilder, NodeKind::SlideDeckBuilder, NodeKind::SpreadsheetBuilder] {
        r.register(kind, Arc::new(BuilderEval));
    }
    r
}

fn config_hash(ctx: &EvalContext<'_>, key: &str) -> Result<Option<ContentHash>, EvalError> {
    match ctx.node.config_str(key) {
        None => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| EvalError::config(key, "expected a 64-character content hash")),
    }
}

fn load_blob(ctx: &EvalContext<'_>, hash: &ContentHash) -> Result<Vec<u8>, EvalError> {
    ctx.blobs
        .get_blob(hash)
        .map_err(|e| EvalError::Store(e.to_string()))?
        .ok_or_else(|| EvalError::Input(format!("blob {hash} not found")))
}

/// Emits the stored document named by the `document` config key.
struct SourceEval;

impl Evaluator for SourceEval {
    fn evaluate(&self, ctx: &EvalContext<'_>) -> Result<Evaluated, EvalError> {
        let hash = config_hash(ctx, "document")?.ok_or_else(|| EvalError::config("document", "required"))?;
        match parse_content(&load_blob(ctx, &hash)?)? {
            doc @ Content::Document(_) => Ok(doc.into()),
            other => Err(EvalError::Input(format!("blob {hash} holds {}, not a document", other.kind()))),
        }
    }
}

/// Passes a page set through unchanged; a document becomes a page set of
/// all its pages, each with score 1.
struct PreviewEval;

fn all_pages(doc: &Document) -> PageSet {
    PageSet::from_entries(
        doc.pages
            .iter()
            .map(|p| PageEntry {
                doc_id: doc.doc_id.clone(),
                page: p.index,
                score: 1.0,
                rationale: "preview".into(),
                title: doc.metadata.title.clone(),
                text: p.text.clone(),
                image_refs: p.image_refs.clone(),
            })
            .collect(),
    )
}

impl Evaluator for PreviewEval {
    fn evaluate(&self, ctx: &EvalContext<'_>) -> Result<Evaluated, EvalError> {
        let input = ctx.port(0).next().ok_or(EvalError::EmptyInput)?;
        match input.content.as_ref() {
            Content::PageSet(ps) => Ok(Content::PageSet(ps.clone()).into()),
            Content::Document(d) => Ok(Content::PageSet(all_pages(d)).into()),
            other => Err(EvalError::Input(format!("cannot preview {}", other.kind()))),
        }
    }
}

struct ExtractorEval;

impl Evaluator for ExtractorEval {
    fn evaluate(&self, ctx: &EvalContext<'_>) -> Result<Evaluated, EvalError> {
        let cfg = ExtractorConfig::from_config(&ctx.node.config)?;
        let docs: Vec<&Document> = ctx
            .port(0)
            .filter_map(|i| match i.content.as_ref() {
                Content::Document(d) => Some(d),
                _ => None,
            })
            .collect();
        let out = extract_relevant(&docs, &cfg, ctx.provider()?, ctx.model)?;
        Ok(Content::PageSet(out.pages).into())
    }
}

struct PlannerEval(PlanKind);

impl Evaluator for PlannerEval {
    fn evaluate(&self, ctx: &EvalContext<'_>) -> Result<Evaluated, EvalError> {
        let prompt = ctx.node.config_str("planning_prompt").unwrap_or("");
        let inputs: Vec<&Content> = ctx.port(0).map(|i| i.content.as_ref()).collect();
        let out = plan(self.0, &inputs, prompt, ctx.provider()?, ctx.model, ctx.blobs)?;
        Ok(Evaluated { content: out.plan.into(), warnings: out.warnings })
    }
}

/// Applies the node's recorded `patches` to its input plan.
struct ViewerEval;

impl Evaluator for ViewerEval {
    fn evaluate(&self, ctx: &EvalContext<'_>) -> Result<Evaluated, EvalError> {
        let input = ctx.port(0).next().ok_or(EvalError::EmptyInput)?;
        let plan = (*input.content)
            .clone()
            .into_plan()
            .ok_or_else(|| EvalError::Input(format!("{} is not a plan", input.content.kind())))?;
        let patch: PlanPatch = match ctx.node.config.get("patches") {
            None | Some(Value::Null) => PlanPatch::default(),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| EvalError::config("patches", e.to_string()))?,
        };
        let patched = apply_patch(&plan, &patch).map_err(|e| EvalError::config("patches", e.to_string()))?;
        Ok(Content::from(patched).into())
    }
}

/// Renders the input plan. The template comes from the `template` config
/// blob or, failing that, the text of the document on the template port.
struct BuilderEval;

impl Evaluator for BuilderEval {
    fn evaluate(&self, ctx: &EvalContext<'_>) -> Result<Evaluated, EvalError> {
        let input = ctx.port(0).next().ok_or(EvalError::EmptyInput)?;
        let plan = (*input.content)
            .clone()
            .into_plan()
            .ok_or_else(|| EvalError::Input(format!("{} is not a plan", input.content.kind())))?;
        let template = if let Some(hash) = config_hash(ctx, "template")? {
            Some(Template::parse(&load_blob(ctx, &hash)?)?)
        } else if let Some(t) = ctx.port(1).next() {
            match t.content.as_ref() {
                Content::Document(d) => {
                    let text: Vec<&str> = d.pages.iter().map(|p| p.text.as_str()).collect();
                    Some(Template::parse(text.join("\n").as_bytes())?)
                }
                other => return Err(EvalError::TemplateInvalid(format!("{} is not a template", other.kind()))),
            }
        } else {
            None
        };
        let options = BuildOptions { xlsx: ctx.node.config.get("xlsx").and_then(Value::as_bool).unwrap_or(false) };
        let artifact = build(&plan, template.as_ref(), options, ctx.blobs)?;
        Ok(Content::Artifact(artifact).into())
    }
}
