mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::http::{Method, StatusCode};
use axum::Router;
use common::*;
use infomorph_core::provider::{HttpProvider, HttpProviderConfig, MockProvider, ProviderSet};
use infomorph_server::engine::Engine;
use serde_json::{json, Value};

struct Busan {
    _dir: tempfile::TempDir,
    app: Router,
    docs: Vec<Value>,
}

async fn busan() -> Busan {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(engine(dir.path()));
    let mut docs = Vec::new();
    for name in BUSAN_SOURCES {
        let bytes = std::fs::read(fixture_path(&format!("busan/{name}"))).unwrap();
        let r = upload(&app, name, &bytes).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
        docs.push(r.json());
    }
    Busan { _dir: dir, app, docs }
}

fn doc_id<'a>(b: &'a Busan, title: &str) -> &'a str {
    b.docs.iter().find(|d| d["title"] == title).unwrap()["doc_id"].as_str().unwrap()
}

async fn synthesized(b: &Busan) -> (String, Value) {
    let triage = call(&b.app, Method::POST, "/triage", Some(json!({ "conversation": fixture_text("busan/conversation.txt") }))).await;
    assert_eq!(triage.status, StatusCode::OK, "{}", triage.text());
    let r = call(
        &b.app,
        Method::POST,
        "/synthesize",
        Some(json!({ "goal": fixture_text("busan/goal.txt"), "triage": triage.json() })),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let v = r.json();
    (v["id"].as_str().unwrap().to_string(), v["workflow"].clone())
}

fn node_of(workflow: &Value, kind: &str) -> u64 {
    let ids: Vec<u64> = workflow["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|n| n["kind"] == kind)
        .map(|n| n["id"].as_u64().unwrap())
        .collect();
    assert_eq!(ids.len(), 1, "{kind}");
    ids[0]
}

fn topo_respected(workflow: &Value, running: &[u64]) -> bool {
    let pos = |id: u64| running.iter().position(|&r| r == id);
    workflow["edges"].as_array().unwrap().iter().all(|e| {
        match (pos(e["from"].as_u64().unwrap()), pos(e["to"].as_u64().unwrap())) {
            (Some(a), Some(b)) => a < b,
            _ => true,
        }
    })
}

async fn execute(app: &Router, wf: &str, body: Value) -> Vec<(String, Value)> {
    let r = call(app, Method::POST, &format!("/workflows/{wf}/execute"), Some(body)).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.text());
    let events_uri = r.json()["events"].as_str().unwrap().to_string();
    let r = call(app, Method::GET, &events_uri, None).await;
    assert_eq!(r.status, StatusCode::OK);
    parse_sse(&r.text())
}

#[tokio::test(flavor = "multi_thread")]
async fn documents_can_be_listed_read_paged_and_chatted() {
    let b = busan().await;
    let notes = doc_id(&b, "trip_notes");

    let r = call(&b.app, Method::GET, "/documents", None).await;
    assert_eq!(r.json()["documents"].as_array().unwrap().len(), 6);

    let r = call(&b.app, Method::GET, &format!("/documents/{notes}"), None).await;
    assert_eq!(r.status, StatusCode::OK);
    let doc = r.json();
    assert_eq!(doc["doc_id"], notes);
    assert_eq!(doc["enrichment"]["status"], "complete");
    assert!(doc["summary"].is_string());
    let pages = doc["pages"].as_array().unwrap();
    assert!(!pages.is_empty());
    assert!(pages.iter().all(|p| p["summary"].is_string() && p["embedded"] == true));

    let r = call(&b.app, Method::GET, &format!("/documents/{notes}/pages/1"), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["index"], 1);
    assert!(!r.json()["text"].as_str().unwrap().is_empty());
    let r = call(&b.app, Method::GET, &format!("/documents/{notes}/pages/999"), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.code(), "not_found");
    let r = call(&b.app, Method::GET, "/documents/doc-0000000000000000", None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = call(&b.app, Method::GET, "/documents/..%2Fsecrets", None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    let r = call(&b.app, Method::POST, &format!("/documents/{notes}/chat"), Some(json!({ "question": "Where is the hotel?" }))).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let answer = r.json();
    assert!(answer["answer"].is_string());
    assert!(answer["cited_pages"].is_array());
    let r = call(&b.app, Method::POST, &format!("/documents/{notes}/chat"), Some(json!({ "question": 3 }))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["path"], "question");
    let r = call(&b.app, Method::POST, &format!("/documents/{notes}/chat"), Some(json!({ "question": " " }))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    // Same bytes, same id; unsupported content is a 422.
    let again = upload(&b.app, "trip_notes.txt", &std::fs::read(fixture_path("busan/trip_notes.txt")).unwrap()).await;
    assert_eq!(again.json()["doc_id"], notes);
    let r = upload(&b.app, "blob.bin", &[0u8, 1, 2, 3]).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "{}", r.text());
}

#[tokio::test(flavor = "multi_thread")]
async fn documents_can_be_ingested_from_a_url() {
    let page = axum::Router::new().route(
        "/guide",
        axum::routing::get(|| async {
            axum::response::Html("<html><head><title>Guide</title></head><body><main><p>Haeundae beach is a short walk from BEXCO.</p></main></body></html>")
        }),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, page).await.unwrap() });

    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(engine(dir.path()));
    let url = format!("http://{addr}/guide");
    let r = call(&app, Method::POST, "/documents", Some(json!({ "url": url }))).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let m = r.json();
    assert_eq!(m["media_kind"], "html");
    assert_eq!(m["origin"], url);
    let r = call(&app, Method::GET, &format!("/documents/{}/pages/1", m["doc_id"].as_str().unwrap()), None).await;
    assert!(r.json()["text"].as_str().unwrap().contains("Haeundae"));

    let r = call(&app, Method::POST, "/documents", Some(json!({ "url": format!("http://{addr}/missing") }))).await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
    assert_eq!(r.code(), "fetch_failed");
    let r = call(&app, Method::POST, "/documents", Some(json!({ "url": "file:///etc/passwd" }))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["path"], "url");
    let r = call(&app, Method::POST, "/documents", Some(json!({ "link": "x" }))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn triage_synthesize_execute_and_rerun_from_cache() {
    let b = busan().await;
    let hiking = doc_id(&b, "hiking_guide").to_string();

    let r = call(&b.app, Method::POST, "/triage", Some(json!({ "conversation": fixture_text("busan/conversation.txt") }))).await;
    let triage = r.json();
    let entry = triage["entries"].as_array().unwrap().iter().find(|e| e["doc_id"] == hiking.as_str()).unwrap();
    assert_eq!(entry["label"], "irrelevant");
    let r = call(&b.app, Method::POST, "/triage", Some(json!({ "conversation": "user: hi", "doc_ids": ["doc-ffffffffffffffff"] }))).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    let (wf, workflow) = synthesized(&b).await;
    assert_eq!(workflow["nodes"].as_array().unwrap().len(), 13);
    let r = call(&b.app, Method::GET, &format!("/workflows/{wf}"), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), workflow);
    let r = call(&b.app, Method::GET, "/workflows", None).await;
    assert_eq!(r.json()["workflows"], json!([wf]));

    // First run: every node runs and finishes clean, in dependency order.
    let events = execute(&b.app, &wf, json!({})).await;
    let (last, report) = events.last().unwrap();
    assert_eq!(last, "report");
    assert_eq!(report["computed"].as_array().unwrap().len(), 13);
    let running: Vec<u64> = events.iter().filter(|(e, _)| e == "running").map(|(_, v)| v["node"].as_u64().unwrap()).collect();
    assert_eq!(running.len(), 13);
    assert!(topo_respected(&workflow, &running));
    let clean: BTreeSet<u64> = events.iter().filter(|(e, _)| e == "clean").map(|(_, v)| v["node"].as_u64().unwrap()).collect();
    assert_eq!(clean.len(), 13);
    for (e, v) in &events[..events.len() - 1] {
        assert_eq!(v["event"], e.as_str());
    }

    // Second run: only cache hits.
    let events = execute(&b.app, &wf, json!({})).await;
    let (body, report) = events.split_at(events.len() - 1);
    assert_eq!(report[0].0, "report");
    assert_eq!(report[0].1["provider_calls"], 0);
    assert_eq!(body.len(), 13);
    assert!(body.iter().all(|(e, _)| e == "cache_hit"), "{body:?}");

    let exec_status = call(&b.app, Method::GET, "/executions/exec-2", None).await;
    assert_eq!(exec_status.json()["status"], "done");
    assert_eq!(call(&b.app, Method::GET, "/executions/exec-99/events", None).await.status, StatusCode::NOT_FOUND);

    // Node output of the table viewer.
    let viewer = node_of(&workflow, "SpreadsheetViewer");
    let r = call(&b.app, Method::GET, &format!("/nodes/{wf}:{viewer}/output"), None).await;
    assert_eq!(r.status, StatusCode::OK);
    let out = r.json();
    assert_eq!(out["content"]["kind"], "plan:table");
    let names: Vec<&str> = out["content"]["value"]["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["Item", "Estimated Cost (USD)", "Notes"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn graph_edits_report_documented_codes_and_leave_no_trace() {
    let b = busan().await;
    let (wf, workflow) = synthesized(&b).await;
    let before = call(&b.app, Method::GET, &format!("/workflows/{wf}"), None).await.bytes;
    let editor = node_of(&workflow, "DocumentEditor");
    let planner = node_of(&workflow, "DocumentPlanner");
    let viewer = node_of(&workflow, "SpreadsheetViewer");

    // editor -> planner closes a loop (planner feeds the editor).
    let r = call(&b.app, Method::POST, "/edges", Some(json!({ "workflow": wf, "from": editor, "to": planner, "port": 0 }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.code(), "cycle");
    // A table plan cannot feed a document editor.
    let r = call(&b.app, Method::POST, "/edges", Some(json!({ "workflow": wf, "from": viewer, "to": editor, "port": 0 }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.code(), "kind_mismatch");
    let r = call(&b.app, Method::POST, "/edges", Some(json!({ "workflow": wf, "from": "x", "to": editor }))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["path"], "from");
    let r = call(&b.app, Method::POST, "/edges", Some(json!({ "workflow": wf, "from": 999, "to": editor }))).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = call(&b.app, Method::POST, "/edges", Some(json!({ "workflow": "wf-404", "from": 1, "to": 2 }))).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    // Approving a node that never ran.
    let r = call(&b.app, Method::POST, &format!("/nodes/{wf}:{editor}/approve"), Some(json!({}))).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.code(), "not_clean");
    let r = call(&b.app, Method::GET, &format!("/nodes/{wf}:{editor}/output"), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    // Config type errors carry the offending key.
    let r = call(&b.app, Method::PUT, &format!("/nodes/{wf}:{planner}/config"), Some(json!({ "config": { "planning_prompt": 7 } }))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.code(), "invalid_config");
    assert_eq!(r.json()["error"]["path"], "config.planning_prompt");
    let r = call(&b.app, Method::PUT, &format!("/nodes/{wf}:{planner}/config"), Some(json!({ "settings": {} }))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    // Malformed workflow replacement.
    let mut bad: Value = serde_json::from_slice(&before).unwrap();
    bad["edges"][0]["port"] = json!("zero");
    let r = raw(&b.app, Method::PUT, &format!("/workflows/{wf}"), &serde_json::to_vec(&bad).unwrap()).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["path"], "edges[0].port");

    let after = call(&b.app, Method::GET, &format!("/workflows/{wf}"), None).await.bytes;
    assert_eq!(before, after, "failed requests must not mutate the workflow");

    // Unknown routes and references.
    assert_eq!(call(&b.app, Method::GET, "/nope", None).await.status, StatusCode::NOT_FOUND);
    assert_eq!(call(&b.app, Method::GET, &format!("/nodes/{wf}/output"), None).await.status, StatusCode::NOT_FOUND);
    assert_eq!(call(&b.app, Method::DELETE, &format!("/edges/{wf}:999"), None).await.status, StatusCode::NOT_FOUND);
    assert_eq!(call(&b.app, Method::GET, "/artifacts/zz", None).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn approve_patch_export_and_artifacts() {
    let b = busan().await;
    let (wf, workflow) = synthesized(&b).await;
    let editor = node_of(&workflow, "DocumentEditor");
    let viewer = node_of(&workflow, "SpreadsheetViewer");
    execute(&b.app, &wf, json!({})).await;

    // Add a builder behind the table viewer.
    let r = call(
        &b.app,
        Method::POST,
        &format!("/workflows/{wf}/nodes"),
        Some(json!({ "kind": "SpreadsheetBuilder", "config": {}, "layout": { "x": 1300, "y": 0 } })),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let builder = r.json()["node_id"].as_u64().unwrap();
    assert_eq!(r.json()["node"]["state"]["status"], "pending");
    let r = call(&b.app, Method::POST, &format!("/workflows/{wf}/nodes"), Some(json!({ "kind": "Teleporter" }))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["path"], "kind");

    let r = call(&b.app, Method::POST, "/edges", Some(json!({ "workflow": wf, "from": viewer, "to": builder }))).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let edge_ref = r.json()["ref"].as_str().unwrap().to_string();
    let r = call(&b.app, Method::POST, "/edges", Some(json!({ "workflow": wf, "from": viewer, "to": builder }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    // Target execution only brings the builder's ancestors up to date.
    let events = execute(&b.app, &wf, json!({ "node": builder })).await;
    let report = &events.last().unwrap().1;
    assert_eq!(report["computed"], json!([builder]));
    let out = call(&b.app, Method::GET, &format!("/nodes/{wf}:{builder}/output"), None).await.json();
    let csv_hash = out["content"]["value"]["files"]["table.csv"].as_str().unwrap().to_string();
    let r = call(&b.app, Method::GET, &format!("/artifacts/{csv_hash}"), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(r.text().starts_with("Item,Estimated Cost (USD),Notes\r\n"));

    // A table edit on the viewer dirties it and its builder.
    let r = call(
        &b.app,
        Method::POST,
        &format!("/nodes/{wf}:{viewer}/patch"),
        Some(json!({ "ops": [{ "op": "set_cell", "row": 0, "col": 2, "value": { "text": "edited" } }] })),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.json()["dirtied"], json!([viewer, builder]));
    let r = call(
        &b.app,
        Method::POST,
        &format!("/nodes/{wf}:{viewer}/patch"),
        Some(json!({ "ops": [{ "op": "set_cell", "row": 9999, "col": 0, "value": { "text": "x" } }] })),
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT, "viewer is dirty until re-run: {}", r.text());
    let events = execute(&b.app, &wf, json!({})).await;
    assert_eq!(events.last().unwrap().1["provider_calls"], 0);
    let r = call(
        &b.app,
        Method::POST,
        &format!("/nodes/{wf}:{viewer}/patch"),
        Some(json!({ "ops": [{ "op": "set_cell", "row": 9999, "col": 0, "value": { "text": "x" } }] })),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["path"], "ops[0]");
    let out = call(&b.app, Method::GET, &format!("/nodes/{wf}:{viewer}/output"), None).await.json();
    assert_eq!(out["content"]["value"]["rows"][0][2], json!({ "text": "edited" }));

    // Approval freezes the editor; config edits are refused until revoked.
    let r = call(&b.app, Method::POST, &format!("/nodes/{wf}:{editor}/approve"), None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.json()["node"]["approved"], true);
    let r = call(&b.app, Method::PUT, &format!("/nodes/{wf}:{editor}/config"), Some(json!({ "config": {} }))).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.code(), "approved_locked");
    let r = call(&b.app, Method::POST, &format!("/nodes/{wf}:{editor}/approve"), Some(json!({ "approved": false }))).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["node"]["approved"], false);

    // Removing the edge dirties the builder, which now lacks an input.
    let r = call(&b.app, Method::DELETE, &format!("/edges/{edge_ref}"), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["dirtied"], json!([builder]));
    let r = call(&b.app, Method::POST, &format!("/workflows/{wf}/execute"), None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.code(), "input_arity");
}

#[tokio::test(flavor = "multi_thread")]
async fn workflows_can_be_created_and_replaced() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app(engine(dir.path()));
    let r = call(&app, Method::POST, "/workflows", Some(json!({ "title": "blank" }))).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let id = r.json()["id"].as_str().unwrap().to_string();
    assert_eq!(id, "wf-1");
    assert_eq!(r.json()["workflow"]["metadata"]["title"], "blank");

    let r = call(&app, Method::POST, "/workflows/wf-1/nodes", Some(json!({ "kind": "PagePreview" }))).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let wf = call(&app, Method::GET, "/workflows/wf-1", None).await;
    assert_eq!(wf.json()["nodes"].as_array().unwrap().len(), 1);

    let r = call(&app, Method::POST, "/workflows", Some(json!({ "workflow": wf.json() }))).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.json()["id"], "wf-2");
    let mut bad = wf.json();
    bad["schema_version"] = json!(9);
    let r = call(&app, Method::POST, "/workflows", Some(json!({ "workflow": bad }))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"]["path"], "workflow.schema_version");

    let r = raw(&app, Method::PUT, "/workflows/copy", &wf.bytes).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(call(&app, Method::GET, "/workflows/copy", None).await.bytes, wf.bytes);
    let r = raw(&app, Method::PUT, "/workflows/copy", b"{not json").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, Method::GET, "/workflows/missing", None).await.status, StatusCode::NOT_FOUND);
    let r = raw(&app, Method::POST, "/workflows", b"[1]").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_execution_of_one_workflow_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app) = app(engine(dir.path()));
    call(&app, Method::POST, "/workflows", Some(json!({ "title": "busy" }))).await;
    let guard = state.engine().begin("wf-1").unwrap();
    let r = call(&app, Method::POST, "/workflows/wf-1/execute", Some(json!({}))).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.code(), "execution_in_progress");
    drop(guard);
    let r = call(&app, Method::POST, "/workflows/wf-1/execute", Some(json!({}))).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_provider_is_a_bad_gateway() {
    let dir = tempfile::tempdir().unwrap();
    // Ingest with the mock so the document is enriched.
    let seeded = Engine::with_providers(dir.path(), ProviderSet::mock(), "default", 2).unwrap();
    let m = seeded.ingest_path(&fixture_path("busan/trip_notes.txt"), Some(&fixtures_dir())).unwrap();
    drop(seeded);

    let mut providers = ProviderSet::new();
    providers.insert(Arc::new(MockProvider::new()));
    let mut cfg = HttpProviderConfig::new("down", "http://127.0.0.1:9/v1");
    cfg.timeout = std::time::Duration::from_secs(2);
    cfg.retry_backoff = std::time::Duration::from_millis(1);
    providers.insert(Arc::new(HttpProvider::new(cfg)));
    providers.set_default("http:down");
    let engine = Arc::new(Engine::with_providers(dir.path(), providers, "default", 2).unwrap());
    let (_, app) = app(engine);
    let r = call(&app, Method::POST, &format!("/documents/{}/chat", m.doc_id), Some(json!({ "question": "hotel?" }))).await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY, "{}", r.text());
    assert_eq!(r.code(), "provider_unavailable");
}
