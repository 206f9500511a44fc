//! Builders: plans rendered into portable files.
//!
//! * document: `document.md`, a Markdown subset (ATX level-1 headings,
//!   paragraphs, `- ` bullet lists, image links, citation lines) plus the
//!   images it links under `images/`.
//! * table: `table.csv` (RFC 4180: CRLF after every record, UTF-8, header
//!   row, fields quoted when they hold `,` `"` CR or LF) and optionally
//!   `table.xlsx`, a single-sheet SpreadsheetML workbook.
//! * slides: `deck.json` plus every displayed slot image under `images/`.
//!
//! Every artifact also carries `manifest.json`. All output is
//! byte-deterministic for a given plan and template.

use std::collections::BTreeMap;
use std::io::{Cursor, Write};

use serde::Serialize;
use serde_json::Value;

use crate::content::{Block, Cell, Content, ColumnType, DocumentPlan, ExportArtifact, Plan, RowGroup, SlideDeckPlan, TablePlan};
use crate::graph::EvalError;
use crate::hash::{canonical_pretty, ContentHash};
use crate::store::BlobStore;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const DECK_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("template invalid: {0}")]
    TemplateInvalid(String),
    #[error("image {0} is not in the blob store")]
    UnresolvedImage(ContentHash),
    #[error("store error: {0}")]
    Store(String),
    #[error("plan invalid: {0}")]
    Plan(String),
}

impl From<BuildError> for EvalError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::TemplateInvalid(m) => EvalError::TemplateInvalid(m),
            BuildError::UnresolvedImage(h) => EvalError::UnresolvedImage(h),
            BuildError::Store(m) => EvalError::Store(m),
            BuildError::Plan(m) => EvalError::Input(m),
        }
    }
}

/// Named style parameters. Template bytes are JSON of the form
/// `{"styles": {"<name>": <string|number|bool>}}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Template {
    pub styles: BTreeMap<String, Value>,
}

impl Template {
    pub fn parse(bytes: &[u8]) -> Result<Self, BuildError> {
        let value: Value =
            serde_json::from_slice(bytes).map_err(|e| BuildError::TemplateInvalid(format!("not JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| BuildError::TemplateInvalid("expected a JSON object".into()))?;
        if let Some(key) = obj.keys().find(|k| *k != "styles") {
            return Err(BuildError::TemplateInvalid(format!("unknown key {key:?}")));
        }
        let styles = obj
            .get("styles")
            .and_then(Value::as_object)
            .ok_or_else(|| BuildError::TemplateInvalid("missing \"styles\" object".into()))?;
        let mut out = BTreeMap::new();
        for (name, v) in styles {
            if name.is_empty() {
                return Err(BuildError::TemplateInvalid("empty style name".into()));
            }
            if !(v.is_string() || v.is_number() || v.is_boolean()) {
                return Err(BuildError::TemplateInvalid(format!("style {name:?} must be a string, number or boolean")));
            }
            out.insert(name.clone(), v.clone());
        }
        Ok(Self { styles: out })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildOptions {
    /// Also write `table.xlsx` for table plans.
    pub xlsx: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    format: &'a str,
    files: &'a BTreeMap<String, ContentHash>,
    styles: &'a BTreeMap<String, Value>,
    plan_hash: ContentHash,
    #[serde(skip_serializing_if = "Option::is_none")]
    groups: Option<&'a Vec<RowGroup>>,
}

fn image_extension(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG") {
        "png"
    } else if bytes.starts_with(&[0xff, 0xd8]) {
        "jpg"
    } else {
        "bin"
    }
}

fn store_err(e: impl std::fmt::Display) -> BuildError {
    BuildError::Store(e.to_string())
}

/// Path of an image inside the bundle, checking the blob exists.
fn image_file(hash: &ContentHash, blobs: &dyn BlobStore) -> Result<String, BuildError> {
    let bytes = blobs
        .get_blob(hash)
        .map_err(store_err)?
        .ok_or(BuildError::UnresolvedImage(*hash))?;
    Ok(format!("images/{hash}.{}", image_extension(&bytes)))
}

fn render_block(block: &Block, images: &BTreeMap<ContentHash, String>, out: &mut String) {
    match block {
        Block::Paragraph { text } => {
            out.push_str(text.trim_end());
            out.push('\n');
        }
        Block::BulletList { items } => {
            for item in items {
                out.push_str("- ");
                out.push_str(item.trim_end());
                out.push('\n');
            }
        }
        Block::TableRef { table } => {
            out.push_str(&format!("[table: {table}]\n"));
        }
        Block::ImageRef { hash } => {
            let path = images.get(hash).cloned().unwrap_or_else(|| format!("images/{hash}.png"));
            out.push_str(&format!("![image]({path})\n"));
        }
        Block::Citation { doc_id, page } => {
            out.push_str(&format!("(source: {doc_id}, p. {page})\n"));
        }
    }
}

/// Markdown for a document plan; `images` maps image hashes to bundle paths.
pub fn render_markdown(plan: &DocumentPlan, images: &BTreeMap<ContentHash, String>) -> String {
    let mut out = String::new();
    for (i, section) in plan.sections.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str("# ");
        out.push_str(section.heading.trim());
        out.push('\n');
        for block in &section.blocks {
            out.push('\n');
            render_block(block, images, &mut out);
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\r', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(plan: &TablePlan) -> String {
    let mut out = String::new();
    let header: Vec<String> = plan.columns.iter().map(|c| csv_field(&c.name)).collect();
    out.push_str(&header.join(","));
    out.push_str("\r\n");
    for row in &plan.rows {
        let fields: Vec<String> = row.iter().map(|c| csv_field(&c.display())).collect();
        out.push_str(&fields.join(","));
        out.push_str("\r\n");
    }
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => {}
            c => out.push(c),
        }
    }
    out
}

fn column_letters(mut index: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (index % 26) as u8);
        if index < 26 {
            break;
        }
        index = index / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).unwrap_or_default()
}

fn xlsx_cell(reference: &str, cell: &Cell, column: ColumnType) -> String {
    let inline = |s: &str| {
        format!("<c r=\"{reference}\" t=\"inlineStr\"><is><t xml:space=\"preserve\">{}</t></is></c>", xml_escape(s))
    };
    match cell {
        Cell::Number(_) => format!("<c r=\"{reference}\"><v>{}</v></c>", cell.display()),
        Cell::Currency { amount, .. } if column != ColumnType::Text => {
            format!("<c r=\"{reference}\"><v>{amount}</v></c>")
        }
        other => inline(&other.display()),
    }
}

const XLSX_CONTENT_TYPES: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n\
<Types xmlns=\"http://schemas.openxmlformats.org/package/2006/content-types\">\
<Default Extension=\"rels\" ContentType=\"application/vnd.openxmlformats-package.relationships+xml\"/>\
<Default Extension=\"xml\" ContentType=\"application/xml\"/>\
<Override PartName=\"/xl/workbook.xml\" ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml\"/>\
<Override PartName=\"/xl/worksheets/sheet1.xml\" ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml\"/>\
</Types>";

const XLSX_ROOT_RELS: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n\
<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">\
<Relationship Id=\"rId1\" Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument\" Target=\"xl/workbook.xml\"/>\
</Relationships>";

const XLSX_WORKBOOK: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n\
<workbook xmlns=\"http://schemas.openxmlformats.org/spreadsheetml/2006/main\" \
xmlns:r=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships\">\
<sheets><sheet name=\"Sheet1\" sheetId=\"1\" r:id=\"rId1\"/></sheets></workbook>";

const XLSX_WORKBOOK_RELS: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n\
<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">\
<Relationship Id=\"rId1\" Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet\" Target=\"worksheets/sheet1.xml\"/>\
</Relationships>";

fn sheet_xml(plan: &TablePlan) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n\
<worksheet xmlns=\"http://schemas.openxmlformats.org/spreadsheetml/2006/main\"><sheetData>",
    );
    out.push_str("<row r=\"1\">");
    for (c, col) in plan.columns.iter().enumerate() {
        let r = format!("{}1", column_letters(c));
        out.push_str(&xlsx_cell(&r, &Cell::text(&col.name), ColumnType::Text));
    }
    out.push_str("</row>");
    for (i, row) in plan.rows.iter().enumerate() {
        let n = i + 2;
        out.push_str(&format!("<row r=\"{n}\">"));
        for (c, cell) in row.iter().enumerate() {
            let ty = plan.columns.get(c).map(|col| col.column_type).unwrap_or(ColumnType::Text);
            out.push_str(&xlsx_cell(&format!("{}{n}", column_letters(c)), cell, ty));
        }
        out.push_str("</row>");
    }
    out.push_str("</sheetData></worksheet>");
    out
}

/// Single-sheet workbook with inline strings. Entry timestamps are fixed so
/// the archive bytes depend only on the plan.
pub fn render_xlsx(plan: &TablePlan) -> Result<Vec<u8>, BuildError> {
    use zip::write::SimpleFileOptions;
    let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let options = SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    let sheet = sheet_xml(plan);
    let parts: [(&str, &str); 5] = [
        ("[Content_Types].xml", XLSX_CONTENT_TYPES),
        ("_rels/.rels", XLSX_ROOT_RELS),
        ("xl/workbook.xml", XLSX_WORKBOOK),
        ("xl/_rels/workbook.xml.rels", XLSX_WORKBOOK_RELS),
        ("xl/worksheets/sheet1.xml", &sheet),
    ];
    for (name, body) in parts {
        zip.start_file(name, options).map_err(store_err)?;
        zip.write_all(body.as_bytes()).map_err(store_err)?;
    }
    Ok(zip.finish().map_err(store_err)?.into_inner())
}

#[derive(Serialize)]
struct Deck<'a> {
    schema_version: u32,
    slides: Vec<DeckSlide<'a>>,
    styles: &'a BTreeMap<String, Value>,
}

#[derive(Serialize)]
struct DeckSlide<'a> {
    title: &'a str,
    blocks: &'a [Block],
    #[serde(skip_serializing_if = "Option::is_none")]
    notes: Option<&'a str>,
    images: Vec<DeckImage<'a>>,
}

#[derive(Serialize)]
struct DeckImage<'a> {
    slot_id: &'a str,
    #[serde(flatten)]
    state: &'a crate::content::SlotState,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
}

fn render_deck(
    plan: &SlideDeckPlan,
    styles: &BTreeMap<String, Value>,
    blobs: &dyn BlobStore,
    files: &mut BTreeMap<String, ContentHash>,
) -> Result<Vec<u8>, BuildError> {
    let mut slides = Vec::new();
    for slide in &plan.slides {
        let mut images = Vec::new();
        for slot in &slide.image_slots {
            let file = match slot.state.image() {
                Some(hash) => {
                    let path = image_file(hash, blobs)?;
                    files.insert(path.clone(), *hash);
                    Some(path)
                }
                None => None,
            };
            images.push(DeckImage { slot_id: &slot.slot_id, state: &slot.state, file });
        }
        slides.push(DeckSlide { title: &slide.title, blocks: &slide.blocks, notes: slide.notes.as_deref(), images });
    }
    let deck = Deck { schema_version: DECK_SCHEMA_VERSION, slides, styles };
    canonical_pretty(&deck).map_err(store_err)
}

fn put(blobs: &dyn BlobStore, files: &mut BTreeMap<String, ContentHash>, name: &str, bytes: &[u8]) -> Result<(), BuildError> {
    let hash = blobs.put_blob(bytes).map_err(store_err)?;
    files.insert(name.to_string(), hash);
    Ok(())
}

/// Renders `plan` and stores every file as a blob.
pub fn build(
    plan: &Plan,
    template: Option<&Template>,
    options: BuildOptions,
    blobs: &dyn BlobStore,
) -> Result<ExportArtifact, BuildError> {
    plan.validate().map_err(|e| BuildError::Plan(e.to_string()))?;
    let empty = BTreeMap::new();
    let styles = template.map(|t| &t.styles).unwrap_or(&empty);
    let mut files = BTreeMap::new();
    let mut groups = None;
    let format = match plan {
        Plan::Document(p) => {
            let mut images = BTreeMap::new();
            for block in p.sections.iter().flat_map(|s| &s.blocks) {
                if let Block::ImageRef { hash } = block {
                    let path = image_file(hash, blobs)?;
                    files.insert(path.clone(), *hash);
                    images.insert(*hash, path);
                }
            }
            put(blobs, &mut files, "document.md", render_markdown(p, &images).as_bytes())?;
            "markdown"
        }
        Plan::Table(p) => {
            put(blobs, &mut files, "table.csv", render_csv(p).as_bytes())?;
            if options.xlsx {
                put(blobs, &mut files, "table.xlsx", &render_xlsx(p)?)?;
            }
            groups = p.groups.as_ref();
            "csv"
        }
        Plan::Slides(p) => {
            let deck = render_deck(p, styles, blobs, &mut files)?;
            put(blobs, &mut files, "deck.json", &deck)?;
            "slides"
        }
    };
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        format,
        files: &files,
        styles,
        plan_hash: Content::from(plan.clone()).hash().map_err(store_err)?,
        groups,
    };
    let bytes = canonical_pretty(&manifest).map_err(store_err)?;
    put(blobs, &mut files, "manifest.json", &bytes)?;
    Ok(ExportArtifact { format: format.to_string(), files })
}
