//! Atomic edit operations over plans, as emitted by viewer/editor nodes.
//!
//! Addresses are 0-based. A "unit" is a section of a document plan or a
//! slide of a deck. Patches apply all-or-nothing: any bad address or
//! invariant violation leaves the input plan untouched.

use serde::{Deserialize, Serialize};

use super::{Block, Cell, ContentError, DocumentPlan, SlideDeckPlan, SlotState, TablePlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plan", content = "value", rename_all = "snake_case")]
pub enum Plan {
    Document(DocumentPlan),
    Slides(SlideDeckPlan),
    Table(TablePlan),
}

impl Plan {
    pub fn validate(&self) -> Result<(), ContentError> {
        match self {
            Plan::Document(p) => p.validate(),
            Plan::Slides(p) => p.validate(),
            Plan::Table(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveTarget {
    Section,
    Slide,
    Row,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PatchOp {
    ReplaceBlock {
        unit: usize,
        index: usize,
        block: Block,
    },
    InsertBlock {
        unit: usize,
        index: usize,
        block: Block,
    },
    DeleteBlock {
        unit: usize,
        index: usize,
    },
    /// Section heading or slide title.
    SetHeading {
        unit: usize,
        text: String,
    },
    Move {
        target: MoveTarget,
        from: usize,
        to: usize,
    },
    SetCell {
        row: usize,
        col: usize,
        value: Cell,
    },
    SetImageSlot {
        slide: usize,
        slot_id: String,
        #[serde(flatten)]
        state: SlotState,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlanPatch {
    pub ops: Vec<PatchOp>,
}

impl PlanPatch {
    pub fn new(ops: Vec<PatchOp>) -> Self {
        Self { ops }
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Concatenation; the second patch's addresses refer to the plan after
    /// the first one is applied.
    pub fn then(mut self, other: PlanPatch) -> Self {
        self.ops.extend(other.ops);
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PatchError {
    #[error("bad address in op {op}: {reason}")]
    BadAddress { op: usize, reason: String },
    #[error("patch breaks plan invariant: {0}")]
    InvariantViolation(ContentError),
}

fn bad(op: usize, reason: impl Into<String>) -> PatchError {
    PatchError::BadAddress {
        op,
        reason: reason.into(),
    }
}

fn blocks_mut<'a>(plan: &'a mut Plan, unit: usize, op: usize) -> Result<&'a mut Vec<Block>, PatchError> {
    match plan {
        Plan::Document(p) => p
            .sections
            .get_mut(unit)
            .map(|s| &mut s.blocks)
            .ok_or_else(|| bad(op, format!("no section {unit}"))),
        Plan::Slides(p) => p
            .slides
            .get_mut(unit)
            .map(|s| &mut s.blocks)
            .ok_or_else(|| bad(op, format!("no slide {unit}"))),
        Plan::Table(_) => Err(bad(op, "tables have no blocks")),
    }
}

fn move_item<T>(items: &mut Vec<T>, from: usize, to: usize, op: usize) -> Result<(), PatchError> {
    if from >= items.len() || to >= items.len() {
        return Err(bad(op, format!("move {from}->{to} outside 0..{}", items.len())));
    }
    let item = items.remove(from);
    items.insert(to, item);
    Ok(())
}

fn apply_op(plan: &mut Plan, op: &PatchOp, n: usize) -> Result<(), PatchError> {
    match op {
        PatchOp::ReplaceBlock { unit, index, block } => {
            let blocks = blocks_mut(plan, *unit, n)?;
            let slot = blocks
                .get_mut(*index)
                .ok_or_else(|| bad(n, format!("no block {index}")))?;
            *slot = block.clone();
        }
        PatchOp::InsertBlock { unit, index, block } => {
            let blocks = blocks_mut(plan, *unit, n)?;
            if *index > blocks.len() {
                return Err(bad(n, format!("insert at {index} beyond {}", blocks.len())));
            }
            blocks.insert(*index, block.clone());
        }
        PatchOp::DeleteBlock { unit, index } => {
            let blocks = blocks_mut(plan, *unit, n)?;
            if *index >= blocks.len() {
                return Err(bad(n, format!("no block {index}")));
            }
            blocks.remove(*index);
        }
        PatchOp::SetHeading { unit, text } => match plan {
            Plan::Document(p) => {
                p.sections
                    .get_mut(*unit)
                    .ok_or_else(|| bad(n, format!("no section {unit}")))?
                    .heading = text.clone();
            }
            Plan::Slides(p) => {
                p.slides
                    .get_mut(*unit)
                    .ok_or_else(|| bad(n, format!("no slide {unit}")))?
                    .title = text.clone();
            }
            Plan::Table(_) => return Err(bad(n, "tables have no headings")),
        },
        PatchOp::Move { target, from, to } => match (target, plan) {
            (MoveTarget::Section, Plan::Document(p)) => move_item(&mut p.sections, *from, *to, n)?,
            (MoveTarget::Slide, Plan::Slides(p)) => move_item(&mut p.slides, *from, *to, n)?,
            (MoveTarget::Row, Plan::Table(p)) => move_item(&mut p.rows, *from, *to, n)?,
            (t, _) => return Err(bad(n, format!("cannot move {t:?} in this plan"))),
        },
        PatchOp::SetCell { row, col, value } => {
            let Plan::Table(p) = plan else {
                return Err(bad(n, "set_cell on a non-table plan"));
            };
            let cell = p
                .rows
                .get_mut(*row)
                .and_then(|r| r.get_mut(*col))
                .ok_or_else(|| bad(n, format!("no cell ({row}, {col})")))?;
            *cell = value.clone();
        }
        PatchOp::SetImageSlot {
            slide,
            slot_id,
            state,
        } => {
            let Plan::Slides(p) = plan else {
                return Err(bad(n, "set_image_slot on a non-slide plan"));
            };
            let s = p
                .slides
                .get_mut(*slide)
                .ok_or_else(|| bad(n, format!("no slide {slide}")))?;
            let slot = s
                .image_slots
                .iter_mut()
                .find(|x| &x.slot_id == slot_id)
                .ok_or_else(|| bad(n, format!("no slot {slot_id:?} on slide {slide}")))?;
            slot.state = state.clone();
        }
    }
    Ok(())
}

/// Applies every op in order to a copy of `plan`, validating the result.
pub fn apply_patch(plan: &Plan, patch: &PlanPatch) -> Result<Plan, PatchError> {
    let mut out = plan.clone();
    for (n, op) in patch.ops.iter().enumerate() {
        apply_op(&mut out, op, n)?;
    }
    out.validate().map_err(PatchError::InvariantViolation)?;
    Ok(out)
}
