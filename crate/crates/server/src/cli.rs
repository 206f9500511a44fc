//! Command-line interface. Exit codes: 0 success, 1 usage, 2 validation,
//! 3 provider, 4 io.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use infomorph_core::graph::{ExecutionReport, NodeId};
use infomorph_core::hash::canonical_pretty;
use infomorph_core::morph::{parse_transcript, SourceTriage};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::engine::{Engine, RunOptions};
use crate::error::ServiceError;

#[derive(Debug, Parser)]
#[command(name = "infomorph", version, about = "Run and serve infomorph document workflows")]
pub struct Cli {
    /// Data directory (blobs, cache, workflows, documents, reports).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest and enrich files or http(s) URLs.
    Ingest {
        #[arg(required = true)]
        sources: Vec<String>,
        /// Record file origins relative to this directory.
        #[arg(long)]
        relative_to: Option<PathBuf>,
    },
    /// List ingested documents.
    Documents,
    /// Ask a question answered from one document only.
    Chat { doc_id: String, question: String },
    /// Judge documents against the preferences in a conversation transcript.
    Triage {
        /// Transcript file of `role: text` lines.
        #[arg(long = "chat")]
        chat: PathBuf,
        /// Documents to judge; all ingested documents when omitted.
        doc_ids: Vec<String>,
    },
    /// Build a workflow for a goal from the latest (or given) triage.
    Synthesize {
        #[arg(long)]
        goal: String,
        #[arg(long)]
        triage: Option<PathBuf>,
        /// Also write the workflow file here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a workflow (id or file path).
    Run {
        workflow: String,
        /// Only bring this node and its ancestors up to date.
        #[arg(long)]
        node: Option<u64>,
        /// Re-evaluate every non-approved node.
        #[arg(long)]
        full: bool,
    },
    /// Approve (freeze) a clean node, or revoke approval.
    Approve {
        workflow: String,
        node: u64,
        #[arg(long)]
        revoke: bool,
    },
    /// Write a clean builder node's files to a directory.
    Export {
        workflow: String,
        node: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the REST/SSE API.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
}

/// Reads and parses a JSON file; a missing file is an io error, bad
/// content a validation error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ServiceError> {
    let bytes = std::fs::read(path).map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| ServiceError::validation(e.path().to_string(), e.inner().to_string()))
}

struct Out<'a> {
    json: bool,
    out: &'a mut dyn Write,
}

impl Out<'_> {
    fn emit<T: Serialize>(&mut self, value: &T, human: impl FnOnce() -> String) -> Result<(), ServiceError> {
        let text = if self.json {
            String::from_utf8(canonical_pretty(value).map_err(|e| ServiceError::Io(e.to_string()))?).expect("utf-8")
        } else {
            let mut s = human();
            if !s.ends_with('\n') {
                s.push('\n');
            }
            s
        };
        self.out.write_all(text.as_bytes()).map_err(|e| ServiceError::Io(e.to_string()))
    }
}

pub fn report_summary(r: &ExecutionReport) -> String {
    let mut s = format!(
        "evaluated {} | cache hits {} | computed {} | provider calls {} | failed {} | skipped {}",
        r.evaluated.len(),
        r.cache_hits.len(),
        r.computed.len(),
        r.provider_calls,
        r.failures.len(),
        r.skipped.len()
    );
    for f in &r.failures {
        s.push_str(&format!("\nnode {} failed: {}", f.node, f.error));
    }
    for w in &r.warnings {
        s.push_str(&format!("\nwarning: {w}"));
    }
    s
}

/// Runs the CLI with `args` (including the program name); returns the
/// process exit code.
pub fn run(args: Vec<OsString>, env: &HashMap<String, String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    let json = cli.json;
    match dispatch(cli, env, &mut Out { json, out }) {
        Ok(()) => 0,
        Err(e) => {
            let text = if json {
                format!("{}\n", serde_json::to_string(&json!({ "error": e.body() })).expect("error serializes"))
            } else {
                format!("error: {e}\n")
            };
            let _ = err.write_all(text.as_bytes());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, env: &HashMap<String, String>, out: &mut Out<'_>) -> Result<(), ServiceError> {
    let mut config = Config::resolve(cli.config.as_deref(), env)?;
    if let Some(d) = cli.data_dir {
        config.data_dir = d;
    }
    if let Command::Serve { host, port } = &cli.command {
        if let Some(h) = host {
            config.host = h.clone();
        }
        if let Some(p) = port {
            config.port = *p;
        }
    }
    let engine = Engine::open(&config)?;
    match cli.command {
        Command::Ingest { sources, relative_to } => {
            let mut manifests = Vec::new();
            for s in &sources {
                let m = if s.starts_with("http://") || s.starts_with("https://") {
                    engine.ingest_url(s)?
                } else {
                    engine.ingest_path(Path::new(s), relative_to.as_deref())?
                };
                manifests.push(m);
            }
            out.emit(&manifests, || {
                manifests
                    .iter()
                    .map(|m| {
                        format!(
                            "{}\t{}\t{} pages\tenrichment {}",
                            m.doc_id, m.title, m.page_count, m.enrichment.status
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Documents => {
            let docs = engine.documents()?;
            out.emit(&docs, || {
                docs.iter().map(|m| format!("{}\t{}\t{}", m.doc_id, m.title, m.origin)).collect::<Vec<_>>().join("\n")
            })
        }
        Command::Chat { doc_id, question } => {
            let a = engine.chat(&doc_id, &question, &[])?;
            out.emit(&a, || format!("{}\n(pages {:?})", a.answer, a.cited_pages))
        }
        Command::Triage { chat, doc_ids } => {
            let text = std::fs::read_to_string(&chat).map_err(|e| ServiceError::Io(format!("{}: {e}", chat.display())))?;
            let ids = if doc_ids.is_empty() {
                engine.documents()?.into_iter().map(|m| m.doc_id).collect()
            } else {
                doc_ids
            };
            let t = engine.triage(&parse_transcript(&text), &ids)?;
            out.emit(&t, || {
                t.entries
                    .iter()
                    .map(|e| format!("{}\t{:?}\t{:.3}\t{}\t{}", e.doc_id, e.effective(), e.score, e.title, e.rationale))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Synthesize { goal, triage, out: file } => {
            let path = triage.unwrap_or_else(|| engine.latest_triage_path());
            let t: SourceTriage = read_json(&path)?;
            let (id, graph) = engine.synthesize(&goal, &t)?;
            if let Some(f) = &file {
                infomorph_core::store::workflow_file::save_workflow(&graph, f)?;
            }
            let path = engine.store().workflows_dir().join(format!("{id}.json"));
            out.emit(&json!({ "id": id, "path": path, "nodes": graph.nodes.len(), "edges": graph.edges.len() }), || {
                format!("{id}\t{}\t{} nodes, {} edges", path.display(), graph.nodes.len(), graph.edges.len())
            })
        }
        Command::Run { workflow, node, full } => {
            let id = engine.resolve_workflow(&workflow)?;
            let report = engine.run(&id, &RunOptions { target: node.map(NodeId), full }, &mut |_| {})?;
            out.emit(&report, || report_summary(&report))
        }
        Command::Approve { workflow, node, revoke } => {
            let id = engine.resolve_workflow(&workflow)?;
            let d = engine.set_approval(&id, NodeId(node), !revoke)?;
            let verb = if revoke { "revoked" } else { "approved" };
            out.emit(&json!({ "node": node, "approved": !revoke, "dirtied": d.dirtied }), || {
                format!("node {node} {verb}; dirtied {:?}", d.dirtied.iter().map(|n| n.0).collect::<Vec<_>>())
            })
        }
        Command::Export { workflow, node, out: dir } => {
            let id = engine.resolve_workflow(&workflow)?;
            let files = engine.export(&id, NodeId(node), &dir)?;
            out.emit(&files, || files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>().join("\n"))
        }
        Command::Serve { .. } => {
            let addr = format!("{}:{}", config.host, config.port);
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| ServiceError::Io(e.to_string()))?;
            rt.block_on(crate::api::serve(Arc::new(engine), &addr))
        }
    }
}
