mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::sync::atomic::{AtomicUsize, Ordering};

use common::{fixture_text, load_busan, load_fixture};
use infomorph_core::content::{
    Block, Cell, Column, ColumnType, Content, Document, DocumentPlan, MediaKind, Page, PageEntry, PageSet, Plan,
    RowGroup, Section, Slide, SlideDeckPlan, SlotState, TablePlan,
};
use infomorph_core::embedding::Embedding;
use infomorph_core::hash::ContentHash;
use infomorph_core::ingest::{enrich, ingest_bytes};
use infomorph_core::morph::build::{render_csv, render_markdown, render_xlsx};
use infomorph_core::morph::extract::rank_candidates;
use infomorph_core::morph::{
    build, detect_intents, extract_relevant, image_op, parse_transcript, plan, preference_prompt, triage_sources,
    BuildError, BuildOptions, ExtractMode, ExtractorConfig, ImageOp, ImageOpError, Intent, PlanError, PlanKind,
    Template, TriageError, NO_CONSTRAINTS,
};
use infomorph_core::provider::{
    CompletionRequest, EmbedItem, EmbedMode, Judgment, MockProvider, Provider, ProviderError, Verdict,
};
use infomorph_core::store::{BlobStore, MemoryStore};
use proptest::prelude::*;
use serde_json::{json, Value};

const TOPICS: [&str; 12] = [
    "Jagalchi fish market sells fresh seafood and grilled eel.",
    "The hotel in Haeundae costs 180000 KRW per night.",
    "Beomeosa temple is a historic site on Geumjeongsan.",
    "Flights from Seoul to Gimhae take one hour.",
    "Gamcheon culture village has colorful houses and murals.",
    "Seafood restaurants near Millak serve raw fish platters.",
    "The conference registration fee is 450 USD.",
    "Taejongdae park has cliffs, a lighthouse and ocean views.",
    "Busan tower offers a view over the harbor at night.",
    "Dongnae eupseong fortress is a historical site with walls.",
    "Children enjoy the aquarium at Haeundae beach.",
    "Hiking trails on Jangsan are steep and strenuous.",
];

fn twelve_page_doc(store: &MemoryStore) -> Document {
    let text = TOPICS.join("\u{c}");
    let doc = ingest_bytes("guide.txt", "guide.txt", text.as_bytes(), None, store).unwrap().document;
    assert_eq!(doc.pages.len(), 12);
    enrich(&doc, &MockProvider::new(), "default", store).document
}

fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let (a, b) = (a.as_slice(), b.as_slice());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
}

fn cfg(prompt: &str, mode: ExtractMode, k: usize) -> ExtractorConfig {
    ExtractorConfig { mode, k, ..ExtractorConfig::new(prompt) }
}

const PROMPTS: [&str; 5] = [
    "seafood restaurants and fish market",
    "historical sites and temples",
    "hotel and flight costs",
    "family friendly activities for children",
    "views of the ocean",
];

#[test]
fn two_stage_is_subset_of_exhaustive_on_twelve_pages() {
    let store = MemoryStore::new();
    let doc = twelve_page_doc(&store);
    let p = MockProvider::new();
    for prompt in PROMPTS {
        let two = extract_relevant(&[&doc], &cfg(prompt, ExtractMode::TwoStage, 8), &p, "default").unwrap();
        let all = extract_relevant(&[&doc], &cfg(prompt, ExtractMode::Exhaustive, 8), &p, "default").unwrap();
        assert!(two.candidates.len() <= 8);
        assert!(two.pages.keys().is_subset(&all.pages.keys()), "{prompt}");
        assert_eq!(all.candidates.len(), 12);
        two.pages.validate().unwrap();
        all.pages.validate().unwrap();
        for e in &two.pages.entries {
            assert!(two.candidates.contains(&(e.doc_id.clone(), e.page)));
        }
    }
}

#[test]
fn two_stage_equals_exhaustive_when_k_covers_every_page() {
    let store = MemoryStore::new();
    let doc = twelve_page_doc(&store);
    let p = MockProvider::new();
    for prompt in PROMPTS {
        for k in [12, 20] {
            let two = extract_relevant(&[&doc], &cfg(prompt, ExtractMode::TwoStage, k), &p, "default").unwrap();
            let all = extract_relevant(&[&doc], &cfg(prompt, ExtractMode::Exhaustive, k), &p, "default").unwrap();
            assert_eq!(two.pages, all.pages, "{prompt} k={k}");
        }
    }
}

#[test]
fn candidate_ranking_matches_brute_force_cosine() {
    let store = MemoryStore::new();
    let doc = twelve_page_doc(&store);
    let p = MockProvider::new();
    for prompt in PROMPTS {
        for k in [1, 3, 8, 12] {
            let c = cfg(prompt, ExtractMode::TwoStage, k);
            let got: Vec<u32> = rank_candidates(&[&doc], &c, &p, "default")
                .unwrap()
                .into_iter()
                .map(|(_, page, _)| page.index)
                .collect();
            let q = p.embed("default", EmbedMode::Text, &[EmbedItem::text(prompt)]).unwrap().pop().unwrap();
            let mut scored: Vec<(f64, u32)> =
                doc.pages.iter().map(|pg| (cosine(&q, pg.embedding.as_ref().unwrap()), pg.index)).collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<u32> = scored.into_iter().take(k).map(|(_, i)| i).collect();
            assert_eq!(got, want, "{prompt} k={k}");
        }
    }
}

#[test]
fn extraction_rationales_explain_matches() {
    let store = MemoryStore::new();
    let doc = twelve_page_doc(&store);
    let out = extract_relevant(
        &[&doc],
        &cfg("seafood market", ExtractMode::Exhaustive, 8),
        &MockProvider::new(),
        "default",
    )
    .unwrap();
    let pages: Vec<u32> = out.pages.entries.iter().map(|e| e.page).collect();
    assert!(pages.contains(&1));
    for e in &out.pages.entries {
        assert!(e.rationale.starts_with("matched: "), "{}", e.rationale);
        assert!(!e.text.is_empty());
        assert!(e.score >= 0.35);
    }
}

#[test]
fn two_stage_needs_embeddings_and_input() {
    let store = MemoryStore::new();
    let raw = ingest_bytes("a.txt", "a.txt", b"one\x0ctwo", None, &store).unwrap().document;
    let p = MockProvider::new();
    let err = extract_relevant(&[&raw], &cfg("one", ExtractMode::TwoStage, 8), &p, "default").unwrap_err();
    assert_eq!(err.to_string(), format!("page 1 of {} has no embedding; two_stage needs enriched documents", raw.doc_id));
    assert!(extract_relevant(&[&raw], &cfg("one", ExtractMode::Exhaustive, 8), &p, "default").is_ok());
    assert!(extract_relevant(&[], &cfg("one", ExtractMode::Exhaustive, 8), &p, "default").is_err());
}

fn page_set(doc: &Document, pages: &[u32]) -> PageSet {
    PageSet::from_entries(
        pages
            .iter()
            .map(|&i| {
                let p = doc.page(i).unwrap();
                PageEntry {
                    doc_id: doc.doc_id.clone(),
                    page: i,
                    score: 1.0,
                    rationale: "test".into(),
                    title: doc.metadata.title.clone(),
                    text: p.text.clone(),
                    image_refs: p.image_refs.clone(),
                }
            })
            .collect(),
    )
}

#[test]
fn document_planner_uses_prompt_sections_and_cites_inputs() {
    let store = MemoryStore::new();
    let doc = twelve_page_doc(&store);
    let set = Content::PageSet(page_set(&doc, &[1, 3, 6, 10]));
    let out = plan(
        PlanKind::Document,
        &[&set],
        "Write a guide. sections: Seafood, History",
        &MockProvider::new(),
        "default",
        &store,
    )
    .unwrap();
    let Plan::Document(d) = out.plan else { panic!("expected document plan") };
    let headings: Vec<&str> = d.sections.iter().map(|s| s.heading.as_str()).collect();
    assert_eq!(headings, ["Seafood", "History"]);
    let cited: BTreeSet<u32> = d.citations().map(|(_, p)| p).collect();
    assert_eq!(cited, BTreeSet::from([1, 3, 6, 10]));
    let Content::PageSet(ps) = &set else { unreachable!() };
    d.validate_citations(&[ps]).unwrap();
    assert!(out.warnings.is_empty());
}

#[test]
fn planners_reject_empty_input_and_prompt() {
    let store = MemoryStore::new();
    let p = MockProvider::new();
    assert!(matches!(plan(PlanKind::Document, &[], "x", &p, "default", &store), Err(PlanError::EmptyInput)));
    let set = Content::PageSet(PageSet::default());
    assert!(matches!(plan(PlanKind::Table, &[&set], "  ", &p, "default", &store), Err(PlanError::EmptyPrompt)));
}

/// Replies from a fixed script, then defers to the mock.
struct Scripted {
    replies: Vec<String>,
    calls: AtomicUsize,
    inner: MockProvider,
    seen: std::sync::Mutex<Vec<CompletionRequest>>,
}

impl Scripted {
    fn new(replies: &[&str]) -> Self {
        Self {
            replies: replies.iter().map(|s| s.to_string()).collect(),
            calls: AtomicUsize::new(0),
            inner: MockProvider::new(),
            seen: Default::default(),
        }
    }
}

impl Provider for Scripted {
    fn id(&self) -> &str {
        "scripted"
    }
    fn params(&self) -> Value {
        json!({})
    }
    fn default_model(&self) -> &str {
        "default"
    }
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        self.seen.lock().unwrap().push(req.clone());
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        match self.replies.get(n) {
            Some(r) => Ok(r.clone()),
            None => self.inner.complete(req),
        }
    }
    fn embed(&self, model: &str, mode: EmbedMode, items: &[EmbedItem]) -> Result<Vec<Embedding>, ProviderError> {
        self.inner.embed(model, mode, items)
    }
    fn judge(&self, model: &str, page: &Page, prompt: &str, t: f64) -> Result<Judgment, ProviderError> {
        self.inner.judge(model, page, prompt, t)
    }
    fn generate_image(&self, model: &str, prompt: &str, blobs: &dyn BlobStore) -> Result<ContentHash, ProviderError> {
        self.inner.generate_image(model, prompt, blobs)
    }
    fn restyle_image(&self, model: &str, s: &ContentHash, p: &str, blobs: &dyn BlobStore) -> Result<ContentHash, ProviderError> {
        self.inner.restyle_image(model, s, p, blobs)
    }
}

#[test]
fn malformed_plan_reply_is_repaired_once() {
    let store = MemoryStore::new();
    let doc = twelve_page_doc(&store);
    let set = Content::PageSet(page_set(&doc, &[1]));
    let p = Scripted::new(&["Sure! Here is your plan: {\"sections\": [{\"heading\": 3}]}"]);
    let out = plan(PlanKind::Document, &[&set], "Write notes.", &p, "default", &store).unwrap();
    assert!(matches!(out.plan, Plan::Document(_)));
    let seen = p.seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let last = seen[1].context.last().unwrap();
    assert_eq!(last.reference, "reply:previous");
    assert!(last.title.starts_with("parse error: "));
    assert!(seen[1].prompt.ends_with("\nWrite notes."));

    let p = Scripted::new(&["not json", "still not json"]);
    let err = plan(PlanKind::Document, &[&set], "Write notes.", &p, "default", &store).unwrap_err();
    assert!(matches!(err, PlanError::Parse(_)));
    assert_eq!(p.calls.load(Ordering::SeqCst), 2);
}

#[test]
fn dangling_citations_and_images_are_dropped_with_warnings() {
    let store = MemoryStore::new();
    let doc = twelve_page_doc(&store);
    let set = Content::PageSet(page_set(&doc, &[1]));
    let missing = ContentHash::of(b"no such image");
    let reply = json!({"sections": [{"heading": "H", "blocks": [
        {"type": "paragraph", "text": "kept"},
        {"type": "citation", "doc_id": doc.doc_id, "page": 1},
        {"type": "citation", "doc_id": doc.doc_id, "page": 9},
        {"type": "image_ref", "hash": missing},
    ]}]})
    .to_string();
    let p = Scripted::new(&[&reply]);
    let out = plan(PlanKind::Document, &[&set], "Write.", &p, "default", &store).unwrap();
    let Plan::Document(d) = out.plan else { panic!() };
    assert_eq!(d.sections[0].blocks.len(), 2);
    assert_eq!(out.warnings.len(), 2, "{:?}", out.warnings);
}

#[test]
fn replanning_from_a_prior_plan_keeps_its_headings() {
    let store = MemoryStore::new();
    let doc = twelve_page_doc(&store);
    let p = MockProvider::new();
    let first = Content::PageSet(page_set(&doc, &[1, 2]));
    let prior = plan(PlanKind::Document, &[&first], "sections: Food, Lodging", &p, "default", &store).unwrap();
    let prior = Content::from(prior.plan);
    let extra = Content::PageSet(page_set(&doc, &[6, 7]));
    let merged = plan(PlanKind::Document, &[&prior, &extra], "Merge in the new pages.", &p, "default", &store).unwrap();
    let Plan::Document(d) = merged.plan else { panic!() };
    let headings: Vec<&str> = d.sections.iter().map(|s| s.heading.as_str()).collect();
    assert_eq!(headings, ["Food", "Lodging"]);
    let cited: BTreeSet<u32> = d.citations().map(|(_, p)| p).collect();
    assert!(cited.is_superset(&BTreeSet::from([1, 2, 6, 7])), "{cited:?}");
}

#[test]
fn table_planner_uses_prompt_columns() {
    let store = MemoryStore::new();
    let doc = twelve_page_doc(&store);
    let set = Content::PageSet(page_set(&doc, &[2, 4, 7]));
    let out = plan(
        PlanKind::Table,
        &[&set],
        "Costs with columns: Item, Amount, Notes. Use categories like Hotel, Flights.",
        &MockProvider::new(),
        "default",
        &store,
    )
    .unwrap();
    let Plan::Table(t) = out.plan else { panic!() };
    assert_eq!(t.column_names(), ["Item", "Amount", "Notes"]);
    assert!(!t.rows.is_empty());
    t.validate().unwrap();
}

#[test]
fn slide_planner_opens_with_a_title_slot() {
    let store = MemoryStore::new();
    let doc = twelve_page_doc(&store);
    let set = Content::PageSet(page_set(&doc, &[1, 3]));
    let out = plan(PlanKind::Slides, &[&set], "A short deck.", &MockProvider::new(), "default", &store).unwrap();
    let Plan::Slides(deck) = out.plan else { panic!() };
    assert_eq!(deck.slides.len(), 3);
    assert_eq!(deck.slides[0].image_slots[0].slot_id, "title-image");
    assert_eq!(deck.slides[0].image_slots[0].state, SlotState::Empty);
}

fn one_section(heading: &str, para: &str) -> DocumentPlan {
    DocumentPlan {
        sections: vec![Section { heading: heading.into(), blocks: vec![Block::Paragraph { text: para.into() }] }],
    }
}

#[test]
fn markdown_layout_is_exact() {
    assert_eq!(render_markdown(&one_section("heading", "para"), &BTreeMap::new()), "# heading\n\npara\n");
    let plan = DocumentPlan {
        sections: vec![
            Section {
                heading: "A".into(),
                blocks: vec![
                    Block::BulletList { items: vec!["x".into(), "y".into()] },
                    Block::Citation { doc_id: "doc-1".into(), page: 2 },
                ],
            },
            Section { heading: "B".into(), blocks: vec![Block::TableRef { table: "costs".into() }] },
        ],
    };
    assert_eq!(
        render_markdown(&plan, &BTreeMap::new()),
        "# A\n\n- x\n- y\n\n(source: doc-1, p. 2)\n\n# B\n\n[table: costs]\n"
    );
}

/// RFC 4180 reader: records end in CRLF; quoted fields may hold commas,
/// CR, LF and doubled quotes.
fn parse_rfc4180(s: &str) -> Result<Vec<Vec<String>>, String> {
    let b = s.as_bytes();
    let mut rows = Vec::new();
    let mut row = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let mut field = Vec::new();
        if b[i] == b'"' {
            i += 1;
            loop {
                match b.get(i) {
                    None => return Err("unterminated quote".into()),
                    Some(b'"') if b.get(i + 1) == Some(&b'"') => {
                        field.push(b'"');
                        i += 2;
                    }
                    Some(b'"') => {
                        i += 1;
                        break;
                    }
                    Some(&c) => {
                        field.push(c);
                        i += 1;
                    }
                }
            }
        } else {
            while i < b.len() && !matches!(b[i], b',' | b'\r' | b'\n') {
                if b[i] == b'"' {
                    return Err(format!("bare quote at {i}"));
                }
                field.push(b[i]);
                i += 1;
            }
        }
        row.push(String::from_utf8(field).map_err(|e| e.to_string())?);
        match (b.get(i), b.get(i + 1)) {
            (Some(b','), _) => i += 1,
            (Some(b'\r'), Some(b'\n')) => {
                rows.push(std::mem::take(&mut row));
                i += 2;
            }
            (None, _) => return Err("record not terminated by CRLF".into()),
            _ => return Err(format!("unexpected byte at {i}")),
        }
    }
    Ok(rows)
}

fn text_table(header: Vec<String>, rows: Vec<Vec<String>>) -> TablePlan {
    TablePlan {
        columns: header.into_iter().map(|name| Column { name, column_type: ColumnType::Text }).collect(),
        rows: rows.into_iter().map(|r| r.into_iter().map(Cell::Text).collect()).collect(),
        groups: None,
    }
}

proptest! {
    #[test]
    fn csv_round_trips_through_an_rfc4180_reader(
        (header, rows) in (1usize..5).prop_flat_map(|w| (
            prop::collection::vec("[A-Za-z ]{1,6}", w),
            prop::collection::vec(prop::collection::vec("[a-z,\"\r\n ]{0,8}", w), 0..6),
        ))
    ) {
        let t = text_table(header.clone(), rows.clone());
        let csv = render_csv(&t);
        let parsed = parse_rfc4180(&csv).unwrap();
        let mut want = vec![header];
        want.extend(rows);
        prop_assert_eq!(parsed, want);
    }
}

#[test]
fn csv_formats_numbers_and_currency() {
    let t = TablePlan {
        columns: vec![
            Column { name: "Item".into(), column_type: ColumnType::Text },
            Column { name: "Cost".into(), column_type: ColumnType::Currency },
            Column { name: "N".into(), column_type: ColumnType::Number },
        ],
        rows: vec![vec![
            Cell::text("Hotel, 3 nights"),
            Cell::Currency { amount: "540.00".into(), code: "USD".into() },
            Cell::Number(3.0),
        ]],
        groups: None,
    };
    assert_eq!(render_csv(&t), "Item,Cost,N\r\n\"Hotel, 3 nights\",540.00,3\r\n");
}

fn zip_entry(bytes: &[u8], name: &str) -> String {
    let mut zip = zip::ZipArchive::new(std::io::Cursor::new(bytes)).unwrap();
    let mut s = String::new();
    zip.by_name(name).unwrap().read_to_string(&mut s).unwrap();
    s
}

#[test]
fn xlsx_is_deterministic_and_readable_by_the_ingester() {
    let t = TablePlan {
        columns: vec![
            Column { name: "Item".into(), column_type: ColumnType::Text },
            Column { name: "Cost".into(), column_type: ColumnType::Currency },
        ],
        rows: vec![
            vec![Cell::text("Hotel & <spa>"), Cell::Currency { amount: "540".into(), code: "USD".into() }],
            vec![Cell::text("Food"), Cell::Number(120.5)],
        ],
        groups: None,
    };
    let a = render_xlsx(&t).unwrap();
    assert_eq!(a, render_xlsx(&t).unwrap());
    let names: BTreeSet<String> =
        zip::ZipArchive::new(std::io::Cursor::new(&a)).unwrap().file_names().map(String::from).collect();
    assert_eq!(
        names,
        BTreeSet::from(
            ["[Content_Types].xml", "_rels/.rels", "xl/workbook.xml", "xl/_rels/workbook.xml.rels", "xl/worksheets/sheet1.xml"]
                .map(String::from)
        )
    );
    assert!(zip_entry(&a, "xl/worksheets/sheet1.xml").contains("Hotel &amp; &lt;spa&gt;"));
    let store = MemoryStore::new();
    let doc = ingest_bytes("t.xlsx", "t.xlsx", &a, None, &store).unwrap().document;
    assert_eq!(doc.pages[0].text, "Sheet1\nItem\tCost\nHotel & <spa>\t540\nFood\t120.5");
}

fn artifact_file(store: &MemoryStore, art: &infomorph_core::content::ExportArtifact, name: &str) -> Vec<u8> {
    store.get_blob(&art.files[name]).unwrap().unwrap()
}

#[test]
fn document_build_writes_markdown_manifest_and_images() {
    let store = MemoryStore::new();
    let png = b"\x89PNG\r\n\x1a\nfake".to_vec();
    let img = store.put_blob(&png).unwrap();
    let mut d = one_section("Trip", "Day one.");
    d.sections[0].blocks.push(Block::ImageRef { hash: img });
    let plan = Plan::Document(d);
    let template = Template::parse(br#"{"styles": {"font": "Noto Sans", "size": 11}}"#).unwrap();
    let art = build(&plan, Some(&template), BuildOptions::default(), &store).unwrap();
    art.validate().unwrap();
    assert_eq!(art.format, "markdown");
    let image_path = format!("images/{img}.png");
    assert_eq!(
        art.files.keys().cloned().collect::<Vec<_>>(),
        vec!["document.md".to_string(), image_path.clone(), "manifest.json".to_string()]
    );
    let md = String::from_utf8(artifact_file(&store, &art, "document.md")).unwrap();
    assert_eq!(md, format!("# Trip\n\nDay one.\n\n![image]({image_path})\n"));
    let manifest: Value = serde_json::from_slice(&artifact_file(&store, &art, "manifest.json")).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["format"], "markdown");
    assert_eq!(manifest["styles"]["font"], "Noto Sans");
    assert_eq!(manifest["plan_hash"], json!(Content::from(plan.clone()).hash().unwrap()));
    assert_eq!(manifest["files"]["document.md"], json!(art.files["document.md"]));
    assert_eq!(build(&plan, Some(&template), BuildOptions::default(), &store).unwrap(), art);
}

#[test]
fn table_build_writes_csv_and_optional_xlsx() {
    let store = MemoryStore::new();
    let mut t = text_table(vec!["Item".into()], vec![vec!["Hotel".into()], vec!["Food".into()]]);
    t.groups = Some(vec![RowGroup { label: "Stay".into(), start: 0, end: 1 }]);
    let plan = Plan::Table(t);
    let art = build(&plan, None, BuildOptions::default(), &store).unwrap();
    assert_eq!(art.format, "csv");
    assert_eq!(art.files.keys().collect::<Vec<_>>(), ["manifest.json", "table.csv"]);
    let manifest: Value = serde_json::from_slice(&artifact_file(&store, &art, "manifest.json")).unwrap();
    assert_eq!(manifest["groups"][0]["label"], "Stay");
    let art = build(&plan, None, BuildOptions { xlsx: true }, &store).unwrap();
    assert!(art.files.contains_key("table.xlsx"));
}

#[test]
fn slides_build_writes_deck_json() {
    let store = MemoryStore::new();
    let img = store.put_blob(&[0xff, 0xd8, 0xff, 0xe0]).unwrap();
    let deck = SlideDeckPlan {
        slides: vec![Slide {
            title: "Busan".into(),
            blocks: vec![Block::Paragraph { text: "Hello".into() }],
            image_slots: vec![
                infomorph_core::content::ImageSlot { slot_id: "a".into(), state: SlotState::Sourced { hash: img } },
                infomorph_core::content::ImageSlot { slot_id: "b".into(), state: SlotState::Empty },
            ],
            notes: None,
        }],
    };
    let art = build(&Plan::Slides(deck), None, BuildOptions::default(), &store).unwrap();
    assert_eq!(art.format, "slides");
    let deck: Value = serde_json::from_slice(&artifact_file(&store, &art, "deck.json")).unwrap();
    assert_eq!(deck["schema_version"], 1);
    assert_eq!(deck["slides"][0]["title"], "Busan");
    assert_eq!(deck["slides"][0]["images"][0]["file"], format!("images/{img}.jpg"));
    assert!(deck["slides"][0]["images"][1].get("file").is_none());
    assert!(art.files.contains_key(&format!("images/{img}.jpg")));
}

#[test]
fn build_fails_on_missing_image_and_bad_template() {
    let store = MemoryStore::new();
    let missing = ContentHash::of(b"absent");
    let mut d = one_section("T", "p");
    d.sections[0].blocks.push(Block::ImageRef { hash: missing });
    let err = build(&Plan::Document(d), None, BuildOptions::default(), &store).unwrap_err();
    assert_eq!(err, BuildError::UnresolvedImage(missing));
    for bad in [&b"not json"[..], b"[]", br#"{"styles": {"a": [1]}}"#, br#"{"styles": {}, "extra": 1}"#, b"{}"] {
        assert!(matches!(Template::parse(bad), Err(BuildError::TemplateInvalid(_))), "{}", String::from_utf8_lossy(bad));
    }
}

fn title_deck(store: &MemoryStore) -> SlideDeckPlan {
    let doc = twelve_page_doc(store);
    let set = Content::PageSet(page_set(&doc, &[1]));
    match plan(PlanKind::Slides, &[&set], "Deck.", &MockProvider::new(), "default", store).unwrap().plan {
        Plan::Slides(d) => d,
        _ => unreachable!(),
    }
}

#[test]
fn generate_then_restyle_a_slot() {
    let store = MemoryStore::new();
    let deck = title_deck(&store);
    let p = MockProvider::new();
    let gen = image_op(ImageOp::Generate, &deck, 0, "title-image", "Busan harbor at dusk", &p, "default", &store).unwrap();
    let SlotState::Generated { hash, prompt } = gen.plan.slides[0].image_slots[0].state.clone() else { panic!() };
    assert_eq!(prompt, "Busan harbor at dusk");
    assert!(store.contains_blob(&hash));
    let again = image_op(ImageOp::Generate, &deck, 0, "title-image", "Busan harbor at dusk", &p, "default", &store).unwrap();
    assert_eq!(again, gen);

    let re = image_op(ImageOp::Restyle, &gen.plan, 0, "title-image", "watercolor", &p, "default", &store).unwrap();
    let SlotState::Restyled { hash: new, source_hash, .. } = &re.plan.slides[0].image_slots[0].state else { panic!() };
    assert_eq!(*source_hash, hash);
    assert_ne!(*new, hash);
    assert!(store.contains_blob(new));
    assert_eq!(re.plan.slides[1..], deck.slides[1..]);
}

#[test]
fn image_op_errors() {
    let store = MemoryStore::new();
    let deck = title_deck(&store);
    let p = MockProvider::new();
    assert!(matches!(
        image_op(ImageOp::Generate, &deck, 0, "nope", "x", &p, "default", &store),
        Err(ImageOpError::BadAddress { slide: 0, .. })
    ));
    assert!(matches!(
        image_op(ImageOp::Generate, &deck, 99, "title-image", "x", &p, "default", &store),
        Err(ImageOpError::BadAddress { slide: 99, .. })
    ));
    assert!(matches!(
        image_op(ImageOp::Restyle, &deck, 0, "title-image", "x", &p, "default", &store),
        Err(ImageOpError::NothingToRestyle { .. })
    ));
    assert_eq!(
        image_op(ImageOp::Generate, &deck, 0, "title-image", " ", &p, "default", &store).unwrap_err(),
        ImageOpError::EmptyPrompt
    );
}

const PREFERENCE: &str = "Looking for historical sites, seafood spots, and family-friendly activities for early October. Please avoid strenuous hiking and modern art.";

#[test]
fn preference_prompt_keeps_user_sentences_with_cues() {
    let turns = parse_transcript(&fixture_text("busan/conversation.txt"));
    assert!(turns.len() >= 2);
    assert_eq!(preference_prompt(&turns), PREFERENCE);
    let single = parse_transcript("I want seafood.\nThe weather is nice.");
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].role, "user");
    assert_eq!(preference_prompt(&single), "I want seafood.");
}

#[test]
fn triage_flags_the_decoy_and_honours_overrides() {
    let store = MemoryStore::new();
    let docs = load_busan(&store);
    let refs: Vec<&Document> = docs.iter().collect();
    let turns = parse_transcript(&fixture_text("busan/conversation.txt"));
    let mut t = triage_sources(&turns, &refs, &MockProvider::new(), "default").unwrap();
    assert_eq!(t.preference_prompt, PREFERENCE);
    let hiking = docs.iter().find(|d| d.metadata.title == "hiking_guide").unwrap();
    let entry = t.entry(&hiking.doc_id).unwrap();
    assert_eq!(entry.label, Verdict::Irrelevant);
    assert!(entry.rationale.contains("excluded"), "{}", entry.rationale);
    assert_eq!(t.relevant().count(), docs.len() - 1);

    t.set_override(&hiking.doc_id, Some(Verdict::Relevant)).unwrap();
    assert_eq!(t.relevant().count(), docs.len());
    t.set_override(&hiking.doc_id, None).unwrap();
    assert_eq!(t.relevant().count(), docs.len() - 1);
    assert_eq!(t.set_override("doc-x", None), Err(TriageError::UnknownDocument("doc-x".into())));
}

#[test]
fn triage_without_preferences_keeps_everything() {
    let store = MemoryStore::new();
    let doc = load_fixture("busan/trip_notes.txt", &store);
    let t = triage_sources(&parse_transcript("user: hi there"), &[&doc], &MockProvider::new(), "default").unwrap();
    assert_eq!(t.preference_prompt, "");
    assert_eq!(t.entries[0].label, Verdict::Relevant);
    assert_eq!(t.entries[0].score, 1.0);
    assert_eq!(t.entries[0].rationale, NO_CONSTRAINTS);
}

#[test]
fn triage_requires_enriched_documents() {
    let store = MemoryStore::new();
    let raw = ingest_bytes("a.txt", "a.txt", b"seafood", Some(MediaKind::Text), &store).unwrap().document;
    let turns = parse_transcript("user: I want seafood.");
    assert_eq!(triage_sources(&turns, &[&raw], &MockProvider::new(), "default"), Err(TriageError::NotEnriched));
    assert_eq!(triage_sources(&turns, &[], &MockProvider::new(), "default"), Err(TriageError::NoDocuments));
}

#[test]
fn goal_words_select_branches() {
    assert_eq!(detect_intents(&fixture_text("busan/goal.txt")), vec![Intent::Table, Intent::Document]);
    assert_eq!(detect_intents("make slides and a cost table"), vec![Intent::Table, Intent::Slides]);
    assert_eq!(detect_intents("something about Busan"), vec![Intent::Document]);
}
