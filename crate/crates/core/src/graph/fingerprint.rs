use serde::Serialize;
use serde_json::{json, Value};

use super::{Config, NodeId, NodeKind};
use crate::hash::{hash_canonical, ContentHash};

/// Cache key of one node evaluation.
pub type Fingerprint = ContentHash;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderIdentity {
    pub id: String,
    pub model: String,
    pub params: Value,
}

/// Digest over the kind tag, the canonical config, the input output-hashes
/// ordered by (port, producer id), and the provider identity when the kind
/// calls one.
pub fn fingerprint(
    kind: NodeKind,
    config: &Config,
    inputs: &[(usize, NodeId, ContentHash)],
    provider: Option<&ProviderIdentity>,
) -> Fingerprint {
    let mut ordered = inputs.to_vec();
    ordered.sort_by_key(|(port, from, _)| (*port, *from));
    let inputs: Vec<Value> = ordered
        .iter()
        .map(|(port, from, hash)| json!([port, from.0, hash.to_hex()]))
        .collect();
    hash_canonical(&json!({
        "kind": kind.name(),
        "config": config,
        "inputs": inputs,
        "provider": provider,
    }))
    .expect("fingerprint material is plain JSON")
}
