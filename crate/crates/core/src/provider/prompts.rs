//! Fixed prompt templates. They are part of enrichment cache keys and node
//! fingerprints (via the planner kind), so editing one invalidates cached
//! results that depend on it.
//!
//! Every system prompt starts with a `task:` line naming the operation;
//! the mock provider dispatches on it.

pub const TEMPLATE_VERSION: &str = "v1";

pub const PAGE_SUMMARY_SYSTEM: &str = "task: summarize\n\
You write short extractive summaries of a single page. Reply with at most \
two sentences taken from the page. Do not add facts.";
pub const PAGE_SUMMARY_PROMPT: &str = "Summarize this page for a hover preview.";

pub const DOC_SUMMARY_SYSTEM: &str = "task: summarize\n\
You write a short summary of a whole document from its page summaries. \
Reply with at most two sentences.";
pub const DOC_SUMMARY_PROMPT: &str = "Summarize the whole document.";

pub const CHAT_SYSTEM: &str = "task: chat\n\
Answer the question using only the given pages of one document. Cite \
pages as [p.N]. If the pages do not answer it, reply \"no relevant content\".";

pub const PLAN_DOCUMENT_SYSTEM: &str = "task: plan:document\n\
Produce a document plan as JSON: {\"sections\":[{\"heading\":string,\"blocks\":[block]}]} \
where block is {\"type\":\"paragraph\",\"text\"} | {\"type\":\"bullet_list\",\"items\":[string]} \
| {\"type\":\"citation\",\"doc_id\",\"page\"} | {\"type\":\"image_ref\",\"hash\"}. \
When a prior document plan is in the context, keep its section headings \
and merge new material into them. Reply with JSON only.";

pub const PLAN_SLIDES_SYSTEM: &str = "task: plan:slides\n\
Produce a slide deck plan as JSON: {\"slides\":[{\"title\":string,\"blocks\":[block],\
\"image_slots\":[{\"slot_id\":string,\"state\":\"empty\"|\"sourced\",\"hash\"?}],\"notes\"?:string}]} \
where block is a paragraph or bullet_list. Reply with JSON only.";

pub const PLAN_TABLE_SYSTEM: &str = "task: plan:table\n\
Produce a table plan as JSON: {\"columns\":[{\"name\":string,\"type\":\"text\"|\"number\"|\"currency\"}],\
\"rows\":[[cell]],\"groups\"?:[{\"label\",\"start\",\"end\"}]} where cell is \
{\"text\":string} | {\"number\":n} | {\"currency\":{\"amount\":\"123.00\",\"code\":\"USD\"}}. \
Use exactly the columns the user names. Reply with JSON only.";

/// Prefix marking a repair request; the rest of the system prompt is the
/// original one.
pub const REPAIR_PREFIX: &str = "repair\n";
pub const REPAIR_INSTRUCTION: &str = "Your previous reply could not be parsed. Reply again with valid JSON only.";

pub fn task_of(system: &str) -> &str {
    let body = system.strip_prefix(REPAIR_PREFIX).unwrap_or(system);
    body.lines()
        .next()
        .and_then(|l| l.strip_prefix("task:"))
        .map(str::trim)
        .unwrap_or("")
}
