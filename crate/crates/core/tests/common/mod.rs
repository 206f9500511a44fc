#![allow(dead_code)]

use std::path::PathBuf;

use infomorph_core::content::Document;
use infomorph_core::ingest::{enrich, ingest_bytes, store_document};
use infomorph_core::provider::MockProvider;
use infomorph_core::store::Store;

pub const BUSAN_SOURCES: [&str; 6] = [
    "trip_notes.txt",
    "uist_site.html",
    "receipts_apr2025.txt",
    "visitbusan.txt",
    "winter_festival_2023.txt",
    "hiking_guide.txt",
];

pub fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn fixture_text(rel: &str) -> String {
    std::fs::read_to_string(fixture_path(rel)).expect("fixture readable")
}

/// Ingests, enriches (mock provider) and stores one fixture; the origin is
/// the path relative to the fixtures directory so hashes do not depend on
/// where the repository is checked out.
pub fn load_fixture(rel: &str, store: &dyn Store) -> Document {
    let bytes = std::fs::read(fixture_path(rel)).expect("fixture readable");
    let doc = ingest_bytes(rel, rel, &bytes, None, store).expect("fixture ingests").document;
    let doc = enrich(&doc, &MockProvider::new(), "default", store).document;
    store_document(&doc, store).expect("document stored");
    doc
}

pub fn load_busan(store: &dyn Store) -> Vec<Document> {
    BUSAN_SOURCES.iter().map(|n| load_fixture(&format!("busan/{n}"), store)).collect()
}

pub fn doc_hash(doc: &Document) -> infomorph_core::hash::ContentHash {
    infomorph_core::content::Content::Document(doc.clone()).hash().expect("valid document")
}

pub fn source_config(doc: &Document) -> infomorph_core::graph::Config {
    let mut c = infomorph_core::graph::Config::new();
    c.insert("document".into(), serde_json::json!(doc_hash(doc).to_hex()));
    c.insert("path".into(), serde_json::json!(doc.origin));
    c
}

pub fn config(pairs: &[(&str, serde_json::Value)]) -> infomorph_core::graph::Config {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}
