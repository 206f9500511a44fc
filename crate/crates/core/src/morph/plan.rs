//! Planning: turning page sets (and prior plans) into an editable plan via
//! one structured completion, with a single repair retry.

use std::collections::BTreeSet;

use serde::de::DeserializeOwned;

use crate::content::{Block, Content, DocumentPlan, Plan, SlideDeckPlan, SlotState, TablePlan};
use crate::hash::ContentHash;
use crate::graph::EvalError;
use crate::hash::canonical_bytes;
use crate::provider::{prompts, CompletionRequest, ContextItem, Provider, ProviderError};
use crate::store::BlobStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    Document,
    Slides,
    Table,
}

impl PlanKind {
    pub fn system_prompt(&self) -> &'static str {
        match self {
            PlanKind::Document => prompts::PLAN_DOCUMENT_SYSTEM,
            PlanKind::Slides => prompts::PLAN_SLIDES_SYSTEM,
            PlanKind::Table => prompts::PLAN_TABLE_SYSTEM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("no inputs to plan from")]
    EmptyInput,
    #[error("planning prompt is empty")]
    EmptyPrompt,
    #[error("plan could not be parsed after repair: {0}")]
    Parse(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl From<PlanError> for EvalError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::EmptyInput => EvalError::EmptyInput,
            PlanError::EmptyPrompt => EvalError::config("planning_prompt", "required"),
            PlanError::Parse(m) => EvalError::PlanParse(m),
            PlanError::Provider(p) => EvalError::Provider(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub plan: Plan,
    pub warnings: Vec<String>,
}

fn plan_reference(content: &Content) -> String {
    let hash = canonical_bytes(content).map(|b| ContentHash::of(&b).to_hex()).unwrap_or_default();
    format!("{}:{}", content.kind(), &hash[..hash.len().min(16)])
}

/// Context items for the planner, in input order. Page-set entries become
/// page items; plans are passed as their JSON.
pub fn context_for(inputs: &[&Content]) -> Vec<ContextItem> {
    let mut out = Vec::new();
    for content in inputs {
        match content {
            Content::PageSet(ps) => {
                for e in &ps.entries {
                    let mut item = ContextItem::page(&e.doc_id, e.page, &e.title, &e.text);
                    item.images = e.image_refs.clone();
                    out.push(item);
                }
            }
            Content::DocumentPlan(_) | Content::SlideDeckPlan(_) | Content::TablePlan(_) => {
                let value = match content {
                    Content::DocumentPlan(p) => serde_json::to_string(p),
                    Content::SlideDeckPlan(p) => serde_json::to_string(p),
                    Content::TablePlan(p) => serde_json::to_string(p),
                    _ => unreachable!(),
                };
                out.push(ContextItem {
                    reference: plan_reference(content),
                    title: String::new(),
                    text: value.unwrap_or_default(),
                    images: vec![],
                });
            }
            Content::Document(d) => {
                for p in &d.pages {
                    out.push(ContextItem::page(&d.doc_id, p.index, &d.metadata.title, &p.text));
                }
            }
            Content::Artifact(_) => {}
        }
    }
    out
}

fn json_slice(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (end >= start).then(|| &reply[start..=end])
}

fn parse_as<T: DeserializeOwned>(reply: &str) -> Result<T, String> {
    let slice = json_slice(reply).ok_or_else(|| "reply contains no JSON object".to_string())?;
    let mut de = serde_json::Deserializer::from_str(slice);
    serde_path_to_error::deserialize(&mut de).map_err(|e| format!("{}: {}", e.path(), e.inner()))
}

fn parse_plan(kind: PlanKind, reply: &str) -> Result<Plan, String> {
    let plan = match kind {
        PlanKind::Document => Plan::Document(parse_as::<DocumentPlan>(reply)?),
        PlanKind::Slides => Plan::Slides(parse_as::<SlideDeckPlan>(reply)?),
        PlanKind::Table => Plan::Table(parse_as::<TablePlan>(reply)?),
    };
    plan.validate().map_err(|e| e.to_string())?;
    Ok(plan)
}

/// Pages and images the inputs make available to citations and image refs.
fn resolvable(inputs: &[&Content]) -> (BTreeSet<(String, u32)>, BTreeSet<ContentHash>) {
    let mut pages = BTreeSet::new();
    let mut images = BTreeSet::new();
    for c in inputs {
        match c {
            Content::PageSet(ps) => {
                for e in &ps.entries {
                    pages.insert((e.doc_id.clone(), e.page));
                    images.extend(e.image_refs.iter().copied());
                }
            }
            Content::DocumentPlan(p) => {
                for s in &p.sections {
                    for b in &s.blocks {
                        match b {
                            Block::Citation { doc_id, page } => {
                                pages.insert((doc_id.clone(), *page));
                            }
                            Block::ImageRef { hash } => {
                                images.insert(*hash);
                            }
                            _ => {}
                        }
                    }
                }
            }
            Content::SlideDeckPlan(p) => images.extend(p.image_hashes()),
            Content::Document(d) => {
                for p in &d.pages {
                    pages.insert((d.doc_id.clone(), p.index));
                    images.extend(p.image_refs.iter().copied());
                }
            }
            _ => {}
        }
    }
    (pages, images)
}

/// Drops citations and image references that do not resolve against the
/// inputs (or, for images, the blob store).
fn drop_dangling(plan: &mut Plan, inputs: &[&Content], blobs: &dyn BlobStore) -> Vec<String> {
    let (pages, images) = resolvable(inputs);
    let image_ok = |h: &ContentHash| images.contains(h) || blobs.contains_blob(h);
    let mut warnings = Vec::new();
    match plan {
        Plan::Document(p) => {
            for s in &mut p.sections {
                s.blocks.retain(|b| match b {
                    Block::Citation { doc_id, page } if !pages.contains(&(doc_id.clone(), *page)) => {
                        warnings.push(format!("dropped citation to {doc_id} p.{page}: not among the inputs"));
                        false
                    }
                    Block::ImageRef { hash } if !image_ok(hash) => {
                        warnings.push(format!("dropped image reference {hash}: not found"));
                        false
                    }
                    _ => true,
                });
            }
        }
        Plan::Slides(p) => {
            for slide in &mut p.slides {
                for slot in &mut slide.image_slots {
                    let dangling = match &slot.state {
                        SlotState::Empty => false,
                        SlotState::Sourced { hash } | SlotState::Generated { hash, .. } => !image_ok(hash),
                        SlotState::Restyled { hash, source_hash, .. } => !image_ok(hash) || !image_ok(source_hash),
                    };
                    if dangling {
                        warnings.push(format!("cleared image slot {}: image not found", slot.slot_id));
                        slot.state = SlotState::Empty;
                    }
                }
            }
        }
        Plan::Table(_) => {}
    }
    warnings
}

pub fn plan(
    kind: PlanKind,
    inputs: &[&Content],
    planning_prompt: &str,
    provider: &dyn Provider,
    model: &str,
    blobs: &dyn BlobStore,
) -> Result<PlanOutcome, PlanError> {
    if inputs.is_empty() {
        return Err(PlanError::EmptyInput);
    }
    if planning_prompt.trim().is_empty() {
        return Err(PlanError::EmptyPrompt);
    }
    let mut req = CompletionRequest {
        model: model.to_string(),
        system: kind.system_prompt().to_string(),
        context: context_for(inputs),
        prompt: planning_prompt.to_string(),
        history: vec![],
    };
    let reply = provider.complete(&req)?;
    let mut plan = match parse_plan(kind, &reply) {
        Ok(p) => p,
        Err(first) => {
            req.system = format!("{}{}", prompts::REPAIR_PREFIX, kind.system_prompt());
            req.context.push(ContextItem {
                reference: "reply:previous".into(),
                title: format!("parse error: {first}"),
                text: reply,
                images: vec![],
            });
            req.prompt = format!("{}\n{}", prompts::REPAIR_INSTRUCTION, planning_prompt);
            let second = provider.complete(&req)?;
            parse_plan(kind, &second).map_err(PlanError::Parse)?
        }
    };
    let warnings = drop_dangling(&mut plan, inputs, blobs);
    Ok(PlanOutcome { plan, warnings })
}
