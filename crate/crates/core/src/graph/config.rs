//! Per-kind configuration keys and their value types.

use serde_json::Value;

use super::NodeKind;
use crate::content::PlanPatch;
use crate::hash::ContentHash;

#[derive(Debug, Clone, Copy)]
enum KeyType {
    Text,
    Hash,
    Integer { min: i64 },
    Fraction,
    Bool,
    OneOf(&'static [&'static str]),
    Patches,
}

const PROVIDER_KEYS: &[(&str, KeyType)] = &[("provider", KeyType::Text), ("model", KeyType::Text)];

pub const EXTRACTION_MODES: &[&str] = &["two_stage", "exhaustive"];
pub const RETRIEVAL_MODES: &[&str] = &["text", "image", "multimodal"];

fn keys(kind: NodeKind) -> &'static [(&'static str, KeyType)] {
    use NodeKind::*;
    match kind {
        FileSource => &[("document", KeyType::Hash), ("path", KeyType::Text)],
        UrlSource => &[("document", KeyType::Hash), ("url", KeyType::Text)],
        PagePreview => &[],
        RelevantPageExtractor => &[
            ("extraction_prompt", KeyType::Text),
            ("mode", KeyType::OneOf(EXTRACTION_MODES)),
            ("k", KeyType::Integer { min: 1 }),
            ("retrieval_mode", KeyType::OneOf(RETRIEVAL_MODES)),
            ("tau", KeyType::Fraction),
        ],
        DocumentPlanner | SlideDeckPlanner | SpreadsheetPlanner => &[("planning_prompt", KeyType::Text)],
        DocumentEditor | SlideDeckViewer | SpreadsheetViewer => &[("patches", KeyType::Patches)],
        DocumentBuilder | SlideDeckBuilder => &[("template", KeyType::Hash)],
        SpreadsheetBuilder => &[("template", KeyType::Hash), ("xlsx", KeyType::Bool)],
    }
}

fn key_type(kind: NodeKind, key: &str) -> Option<KeyType> {
    let own = keys(kind).iter();
    let provider = if kind.uses_provider() { PROVIDER_KEYS } else { &[] };
    own.chain(provider.iter()).find(|(k, _)| *k == key).map(|(_, t)| *t)
}

/// Checks that every key is known for `kind` and holds a value of the right
/// type. Returns `(key, reason)` for the first offending entry.
pub fn check(kind: NodeKind, config: &std::collections::BTreeMap<String, Value>) -> Result<(), (String, String)> {
    for (key, value) in config {
        let Some(ty) = key_type(kind, key) else {
            return Err((key.clone(), format!("unknown key for {kind}")));
        };
        let ok = match ty {
            KeyType::Text => value.is_string(),
            KeyType::Hash => value.as_str().is_some_and(|s| s.parse::<ContentHash>().is_ok()),
            KeyType::Integer { min } => value.as_i64().is_some_and(|n| n >= min),
            KeyType::Fraction => value.as_f64().is_some_and(|x| (0.0..=1.0).contains(&x)),
            KeyType::Bool => value.is_boolean(),
            KeyType::OneOf(options) => value.as_str().is_some_and(|s| options.contains(&s)),
            KeyType::Patches => serde_json::from_value::<PlanPatch>(value.clone()).is_ok(),
        };
        if !ok {
            let expected = match ty {
                KeyType::Text => "a string".to_string(),
                KeyType::Hash => "a 64-character content hash".to_string(),
                KeyType::Integer { min } => format!("an integer >= {min}"),
                KeyType::Fraction => "a number in [0, 1]".to_string(),
                KeyType::Bool => "a boolean".to_string(),
                KeyType::OneOf(options) => format!("one of {}", options.join(", ")),
                KeyType::Patches => "a list of patch operations".to_string(),
            };
            return Err((key.clone(), format!("expected {expected}")));
        }
    }
    Ok(())
}
