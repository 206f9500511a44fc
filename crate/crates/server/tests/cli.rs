mod common;

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;

use common::*;
use infomorph_core::graph::{NodeKind, WorkflowGraph};
use infomorph_core::hash::ContentHash;
use infomorph_core::store::workflow_file::{load_workflow, save_workflow};
use serde_json::{json, Value};

const GOLDEN_WORKFLOW: &str = "eaf0e796f907498d012f9532d9a8862e5d8ebf872708da0b6763f46ab349189b";

struct Run {
    code: i32,
    out: String,
    err: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.out).unwrap_or_else(|e| panic!("{e}: {}", self.out))
    }
}

fn cli_env(data: &Path, args: &[&str], env: &HashMap<String, String>) -> Run {
    let mut argv = vec!["infomorph".to_string(), "--data-dir".into(), data.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = infomorph_server::cli::run(argv.into_iter().map(Into::into).collect(), env, &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn cli(data: &Path, args: &[&str]) -> Run {
    cli_env(data, args, &HashMap::new())
}

fn ingest_busan(data: &Path) -> Vec<Value> {
    let paths: Vec<String> = BUSAN_SOURCES.iter().map(|n| fixture_path(&format!("busan/{n}")).display().to_string()).collect();
    let base = fixtures_dir().display().to_string();
    let mut args = vec!["--json", "ingest", "--relative-to", &base];
    args.extend(paths.iter().map(String::as_str));
    let r = cli(data, &args);
    assert_eq!(r.code, 0, "{}", r.err);
    r.json().as_array().unwrap().clone()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), &["frobnicate"]).code, 1);
    assert_eq!(cli(dir.path(), &["ingest"]).code, 1);
    assert_eq!(cli(dir.path(), &["run"]).code, 1);
    let help = cli(dir.path(), &["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.out.contains("synthesize"));
}

#[test]
fn io_and_validation_errors_have_their_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let r = cli(dir.path(), &["ingest", "missing.pdf"]);
    assert_eq!(r.code, 4);
    assert!(r.err.starts_with("error: "), "{}", r.err);
    let r = cli(dir.path(), &["--json", "run", "wf-7"]);
    assert_eq!(r.code, 2);
    let err: Value = serde_json::from_str(r.err.trim()).unwrap();
    assert_eq!(err["error"]["code"], "not_found");

    let env = HashMap::from([("INFOMORPH_PORT".to_string(), "not-a-port".to_string())]);
    assert_eq!(cli_env(dir.path(), &["documents"], &env).code, 2);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "port = \"x\"\n").unwrap();
    let r = cli(dir.path(), &["--config", cfg.to_str().unwrap(), "documents"]);
    assert_eq!(r.code, 2, "{}", r.err);
    assert!(r.err.contains("port"), "{}", r.err);

    let r = cli(dir.path(), &["triage", "--chat", "absent.txt"]);
    assert_eq!(r.code, 4);
    let transcript = dir.path().join("chat.txt");
    std::fs::write(&transcript, "user: hello").unwrap();
    let r = cli(dir.path(), &["triage", "--chat", transcript.to_str().unwrap()]);
    assert_eq!(r.code, 2, "no documents to triage: {}", r.err);
}

#[test]
fn unreachable_provider_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let docs = ingest_busan(dir.path());
    let env = HashMap::from([("INFOMORPH_PROVIDER_ENDPOINT".to_string(), "http://127.0.0.1:9/v1".to_string())]);
    let r = cli_env(dir.path(), &["chat", docs[0]["doc_id"].as_str().unwrap(), "hotel?"], &env);
    assert_eq!(r.code, 3, "{}", r.err);
}

#[test]
fn busan_flow_runs_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let docs = ingest_busan(&data);
    assert_eq!(docs.len(), 6);
    assert!(docs.iter().all(|d| d["enrichment"]["status"] == "complete"));
    assert_eq!(docs[0]["origin"], "busan/trip_notes.txt");

    let conversation = fixture_path("busan/conversation.txt");
    let ids: Vec<&str> = docs.iter().map(|d| d["doc_id"].as_str().unwrap()).collect();
    let mut args = vec!["--json", "triage", "--chat", conversation.to_str().unwrap()];
    args.extend(&ids);
    let r = cli(&data, &args);
    assert_eq!(r.code, 0, "{}", r.err);
    let triage = r.json();
    let hiking = triage["entries"].as_array().unwrap().iter().find(|e| e["title"] == "hiking_guide").unwrap();
    assert_eq!(hiking["label"], "irrelevant");

    let wf_file = dir.path().join("busan.json");
    let goal = fixture_text("busan/goal.txt");
    let r = cli(&data, &["--json", "synthesize", "--goal", &goal, "--out", wf_file.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.json()["id"], "wf-1");
    assert_eq!(r.json()["nodes"], 13);
    let bytes = std::fs::read(&wf_file).unwrap();
    assert_eq!(ContentHash::of(&bytes).to_hex(), GOLDEN_WORKFLOW);

    // Run the stored workflow twice; the second run is served from the cache.
    let r = cli(&data, &["--json", "run", "wf-1"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let first = r.json();
    assert_eq!(first["computed"].as_array().unwrap().len(), 13);
    assert!(first["provider_calls"].as_u64().unwrap() > 0);
    let r = cli(&data, &["run", "wf-1"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("cache hits 13") && r.out.contains("provider calls 0"), "{}", r.out);

    // A workflow file outside the data directory, extended with a builder.
    let mut g = load_workflow(&wf_file).unwrap();
    let viewer = g.nodes.values().find(|n| n.kind == NodeKind::SpreadsheetViewer).unwrap().id;
    let builder = g.add_node(NodeKind::SpreadsheetBuilder, Default::default()).unwrap();
    g.connect(viewer, builder, 0).unwrap();
    save_workflow(&g, &wf_file).unwrap();
    let out_dir = dir.path().join("export");
    let wf = wf_file.to_str().unwrap();
    let b = builder.0.to_string();

    let r = cli(&data, &["export", wf, &b, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(r.code, 2, "export before execute: {}", r.err);
    let r = cli(&data, &["--json", "run", wf, "--node", &b]);
    assert_eq!(r.code, 0, "{}", r.err);
    // Everything upstream is a cache hit from the wf-1 runs.
    assert_eq!(r.json()["provider_calls"], 0);
    assert_eq!(r.json()["computed"], json!([builder.0]));
    let r = cli(&data, &["export", wf, &b, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.err);
    let csv = std::fs::read_to_string(out_dir.join("table.csv")).unwrap();
    assert!(csv.starts_with("Item,Estimated Cost (USD),Notes\r\n"));
    assert!(out_dir.join("manifest.json").is_file());
    let r = cli(&data, &["export", wf, &viewer.0.to_string(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(r.code, 2, "not a builder");

    // Approval round trip on the stored workflow.
    let stored = load_workflow(&data.join("workflows/wf-1.json")).unwrap();
    let editor = stored.nodes.values().find(|n| n.kind == NodeKind::DocumentEditor).unwrap().id.0.to_string();
    let r = cli(&data, &["--json", "approve", "wf-1", &editor]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.json()["approved"], true);
    let saved = load_workflow(&data.join("workflows/wf-1.json")).unwrap();
    assert!(saved.nodes.values().any(|n| n.approved));
    let r = cli(&data, &["approve", "wf-1", &editor, "--revoke"]);
    assert_eq!(r.code, 0, "{}", r.err);
}

#[test]
fn approving_a_node_that_never_ran_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = WorkflowGraph::new("tiny");
    g.add_node(NodeKind::PagePreview, Default::default()).unwrap();
    let file = dir.path().join("tiny.json");
    save_workflow(&g, &file).unwrap();
    let r = cli(dir.path(), &["approve", file.to_str().unwrap(), "1"]);
    assert_eq!(r.code, 2, "{}", r.err);
    assert!(r.err.contains("no computed output"), "{}", r.err);
}

#[test]
fn the_binary_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_infomorph");
    let status = Command::new(bin).arg("--data-dir").arg(dir.path()).args(["ingest", "missing.pdf"]).output().unwrap();
    assert_eq!(status.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&status.stderr).contains("missing.pdf"));
    let status = Command::new(bin).arg("bogus").output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    let status = Command::new(bin).arg("--data-dir").arg(dir.path()).arg("documents").output().unwrap();
    assert_eq!(status.status.code(), Some(0));
}
