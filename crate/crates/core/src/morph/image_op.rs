//! Image operations on slide slots. Each returns the updated plan together
//! with the patch operation that produced it, so a viewer node can record
//! the edit in its `patches` config and replay it deterministically.

use crate::content::{apply_patch, PatchError, PatchOp, Plan, PlanPatch, SlideDeckPlan, SlotState};
use crate::provider::{Provider, ProviderError};
use crate::store::BlobStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageOp {
    Generate,
    Restyle,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImageOpError {
    #[error("no image slot {slot_id:?} on slide {slide}")]
    BadAddress { slide: usize, slot_id: String },
    #[error("slot {slot_id:?} on slide {slide} holds no image to restyle")]
    NothingToRestyle { slide: usize, slot_id: String },
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Patch(#[from] PatchError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageOpOutcome {
    pub plan: SlideDeckPlan,
    pub op: PatchOp,
}

#[allow(clippy::too_many_arguments)]
pub fn image_op(
    op: ImageOp,
    plan: &SlideDeckPlan,
    slide: usize,
    slot_id: &str,
    prompt: &str,
    provider: &dyn Provider,
    model: &str,
    blobs: &dyn BlobStore,
) -> Result<ImageOpOutcome, ImageOpError> {
    let slot = plan
        .slides
        .get(slide)
        .and_then(|s| s.slot(slot_id))
        .ok_or_else(|| ImageOpError::BadAddress { slide, slot_id: slot_id.to_string() })?;
    if prompt.trim().is_empty() {
        return Err(ImageOpError::EmptyPrompt);
    }
    let state = match op {
        ImageOp::Generate => SlotState::Generated {
            hash: provider.generate_image(model, prompt, blobs)?,
            prompt: prompt.to_string(),
        },
        ImageOp::Restyle => {
            let source = *slot
                .state
                .image()
                .ok_or_else(|| ImageOpError::NothingToRestyle { slide, slot_id: slot_id.to_string() })?;
            SlotState::Restyled {
                hash: provider.restyle_image(model, &source, prompt, blobs)?,
                source_hash: source,
                prompt: prompt.to_string(),
            }
        }
    };
    let op = PatchOp::SetImageSlot { slide, slot_id: slot_id.to_string(), state };
    let updated = apply_patch(&Plan::Slides(plan.clone()), &PlanPatch::new(vec![op.clone()]))?;
    let Plan::Slides(plan) = updated else {
        unreachable!("patching a slide plan yields a slide plan")
    };
    Ok(ImageOpOutcome { plan, op })
}
