//! Office Open XML adapters (docx, pptx, xlsx) over `zip` and `quick-xml`.

use std::collections::BTreeMap;
use std::io::{Cursor, Read};

use quick_xml::events::Event;
use quick_xml::Reader;

use super::{IngestError, RawDocument, RawPage};

type Archive = zip::ZipArchive<Cursor<Vec<u8>>>;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Start { name: String, attrs: BTreeMap<String, String> },
    End { name: String },
    Text(String),
}

fn parse_error(message: impl Into<String>) -> IngestError {
    IngestError::Parse { page: None, message: message.into() }
}

fn open(bytes: &[u8]) -> Result<Archive, IngestError> {
    zip::ZipArchive::new(Cursor::new(bytes.to_vec())).map_err(|e| parse_error(format!("not a zip container: {e}")))
}

fn read_part(zip: &mut Archive, name: &str) -> Result<Option<Vec<u8>>, IngestError> {
    let mut file = match zip.by_name(name) {
        Ok(f) => f,
        Err(zip::result::ZipError::FileNotFound) => return Ok(None),
        Err(e) => return Err(parse_error(format!("{name}: {e}"))),
    };
    let mut out = Vec::new();
    file.read_to_end(&mut out).map_err(|e| parse_error(format!("{name}: {e}")))?;
    Ok(Some(out))
}

fn local(name: &[u8]) -> String {
    let s = String::from_utf8_lossy(name);
    match s.rsplit_once(':') {
        Some((_, l)) => l.to_string(),
        None => s.into_owned(),
    }
}

/// Flattens an XML part into start/end/text events with namespace
/// prefixes stripped from element and attribute names.
fn xml_nodes(bytes: &[u8]) -> Result<Vec<Node>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_error(format!("xml is not utf-8: {e}")))?;
    let mut reader = Reader::from_str(text);
    let mut out = Vec::new();
    loop {
        let ev = reader.read_event().map_err(|e| parse_error(format!("xml: {e}")))?;
        match ev {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let name = local(e.name().as_ref());
                let mut attrs = BTreeMap::new();
                for a in e.attributes().flatten() {
                    let v = a.unescape_value().map(|v| v.into_owned()).unwrap_or_default();
                    attrs.insert(local(a.key.as_ref()), v);
                }
                out.push(Node::Start { name: name.clone(), attrs });
                if matches!(ev, Event::Empty(_)) {
                    out.push(Node::End { name });
                }
            }
            Event::End(e) => out.push(Node::End { name: local(e.name().as_ref()) }),
            Event::Text(t) => out.push(Node::Text(t.unescape().map(|t| t.into_owned()).unwrap_or_default())),
            Event::CData(t) => out.push(Node::Text(String::from_utf8_lossy(&t).into_owned())),
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

fn rels(zip: &mut Archive, path: &str) -> Result<BTreeMap<String, (String, String)>, IngestError> {
    let mut out = BTreeMap::new();
    if let Some(bytes) = read_part(zip, path)? {
        for n in xml_nodes(&bytes)? {
            if let Node::Start { name, attrs } = n {
                if name == "Relationship" {
                    if let (Some(id), Some(target)) = (attrs.get("Id"), attrs.get("Target")) {
                        let ty = attrs.get("Type").cloned().unwrap_or_default();
                        out.insert(id.clone(), (target.clone(), ty));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Resolves `target` relative to the directory of `base` (a part path).
fn resolve(base: &str, target: &str) -> String {
    if let Some(abs) = target.strip_prefix('/') {
        return abs.to_string();
    }
    let mut parts: Vec<&str> = base.split('/').collect();
    parts.pop();
    for seg in target.split('/') {
        match seg {
            ".." => {
                parts.pop();
            }
            "." | "" => {}
            s => parts.push(s),
        }
    }
    parts.join("/")
}

#[derive(Default)]
struct CoreProps {
    title: Option<String>,
    author: Option<String>,
    created: Option<String>,
}

fn core_props(zip: &mut Archive) -> Result<CoreProps, IngestError> {
    let mut props = CoreProps::default();
    let Some(bytes) = read_part(zip, "docProps/core.xml")? else {
        return Ok(props);
    };
    let mut current = String::new();
    for n in xml_nodes(&bytes)? {
        match n {
            Node::Start { name, .. } => current = name,
            Node::End { .. } => current.clear(),
            Node::Text(t) if !t.trim().is_empty() => {
                let t = t.trim().to_string();
                match current.as_str() {
                    "title" => props.title = Some(t),
                    "creator" => props.author = Some(t),
                    "created" => props.created = Some(t),
                    _ => {}
                }
            }
            Node::Text(_) => {}
        }
    }
    Ok(props)
}

fn raw_document(props: CoreProps, pages: Vec<RawPage>) -> RawDocument {
    RawDocument { title: props.title, author: props.author, created_at: props.created, pages, tags: vec![] }
}

/// Pages split at explicit page breaks; paragraphs become lines.
pub fn docx(bytes: &[u8]) -> Result<RawDocument, IngestError> {
    let mut zip = open(bytes)?;
    let body = read_part(&mut zip, "word/document.xml")?.ok_or_else(|| parse_error("missing word/document.xml"))?;
    let mut pages = vec![String::new()];
    let mut para = String::new();
    let mut in_text = false;
    for n in xml_nodes(&body)? {
        match n {
            Node::Start { name, attrs } => match name.as_str() {
                "t" => in_text = true,
                "tab" => para.push('\t'),
                "br" if attrs.get("type").map(String::as_str) == Some("page") => {
                    push_line(pages.last_mut().unwrap(), &mut para);
                    pages.push(String::new());
                }
                "br" => para.push('\n'),
                _ => {}
            },
            Node::End { name } => match name.as_str() {
                "t" => in_text = false,
                "p" => push_line(pages.last_mut().unwrap(), &mut para),
                _ => {}
            },
            Node::Text(t) if in_text => para.push_str(&t),
            Node::Text(_) => {}
        }
    }
    push_line(pages.last_mut().unwrap(), &mut para);
    let props = core_props(&mut zip)?;
    let pages = pages.into_iter().map(|text| RawPage { text, images: vec![] }).collect();
    Ok(raw_document(props, pages))
}

fn push_line(page: &mut String, para: &mut String) {
    if !para.trim().is_empty() {
        if !page.is_empty() {
            page.push('\n');
        }
        page.push_str(para.trim_end());
    }
    para.clear();
}

fn numbered_parts(zip: &Archive, prefix: &str, suffix: &str) -> Vec<String> {
    let mut parts: Vec<(u32, String)> = zip
        .file_names()
        .filter_map(|n| {
            let num = n.strip_prefix(prefix)?.strip_suffix(suffix)?.parse().ok()?;
            Some((num, n.to_string()))
        })
        .collect();
    parts.sort();
    parts.into_iter().map(|(_, n)| n).collect()
}

/// One page per slide (in slide-number order); the slide title, when
/// present, is the first line of the page text. Pictures referenced by a
/// slide become its images.
pub fn pptx(bytes: &[u8]) -> Result<RawDocument, IngestError> {
    let mut zip = open(bytes)?;
    let slides = numbered_parts(&zip, "ppt/slides/slide", ".xml");
    if slides.is_empty() {
        return Err(parse_error("presentation has no slides"));
    }
    let mut pages = Vec::new();
    for (i, part) in slides.iter().enumerate() {
        let xml = read_part(&mut zip, part)?.ok_or_else(|| parse_error(format!("missing {part}")))?;
        let nodes = xml_nodes(&xml).map_err(|e| IngestError::Parse { page: Some(i as u32 + 1), message: e.to_string() })?;
        let mut title = Vec::new();
        let mut body = Vec::new();
        let mut in_shape_title = false;
        let mut para = String::new();
        let mut in_text = false;
        let mut images = Vec::new();
        let mut depth_sp = 0usize;
        for n in nodes {
            match n {
                Node::Start { name, attrs } => match name.as_str() {
                    "sp" => {
                        depth_sp += 1;
                        in_shape_title = false;
                    }
                    "ph" if depth_sp > 0 => {
                        let ty = attrs.get("type").map(String::as_str);
                        in_shape_title = matches!(ty, Some("title") | Some("ctrTitle"));
                    }
                    "t" => in_text = true,
                    "blip" => {
                        if let Some(r) = attrs.get("embed") {
                            images.push(r.clone());
                        }
                    }
                    _ => {}
                },
                Node::End { name } => match name.as_str() {
                    "t" => in_text = false,
                    "p" => {
                        let line = para.trim().to_string();
                        para.clear();
                        if !line.is_empty() {
                            if in_shape_title { title.push(line) } else { body.push(line) }
                        }
                    }
                    "sp" => {
                        depth_sp = depth_sp.saturating_sub(1);
                        in_shape_title = false;
                    }
                    _ => {}
                },
                Node::Text(t) if in_text => para.push_str(&t),
                Node::Text(_) => {}
            }
        }
        let mut lines = Vec::new();
        if !title.is_empty() {
            lines.push(title.join(" "));
        }
        lines.extend(body);
        let rel_path = resolve(part, &format!("_rels/{}.rels", part.rsplit('/').next().unwrap_or_default()));
        let relmap = rels(&mut zip, &rel_path)?;
        let mut image_bytes = Vec::new();
        for r in images {
            if let Some((target, _)) = relmap.get(&r) {
                if let Some(b) = read_part(&mut zip, &resolve(part, target))? {
                    image_bytes.push(b);
                }
            }
        }
        pages.push(RawPage { text: lines.join("\n"), images: image_bytes });
    }
    let props = core_props(&mut zip)?;
    Ok(raw_document(props, pages))
}

fn column_index(cell_ref: &str) -> usize {
    let mut n = 0usize;
    for c in cell_ref.chars().take_while(|c| c.is_ascii_alphabetic()) {
        n = n * 26 + (c.to_ascii_uppercase() as usize - 'A' as usize + 1);
    }
    n.saturating_sub(1)
}

/// One page per worksheet: the sheet name, then one tab-separated line
/// per non-empty row.
pub fn xlsx(bytes: &[u8]) -> Result<RawDocument, IngestError> {
    let mut zip = open(bytes)?;
    let mut shared = Vec::new();
    if let Some(sst) = read_part(&mut zip, "xl/sharedStrings.xml")? {
        let mut current: Option<String> = None;
        let mut in_text = false;
        for n in xml_nodes(&sst)? {
            match n {
                Node::Start { name, .. } if name == "si" => current = Some(String::new()),
                Node::Start { name, .. } if name == "t" => in_text = true,
                Node::End { name } if name == "t" => in_text = false,
                Node::End { name } if name == "si" => shared.push(current.take().unwrap_or_default()),
                Node::Text(t) if in_text => {
                    if let Some(c) = current.as_mut() {
                        c.push_str(&t);
                    }
                }
                _ => {}
            }
        }
    }
    let workbook = read_part(&mut zip, "xl/workbook.xml")?.ok_or_else(|| parse_error("missing xl/workbook.xml"))?;
    let relmap = rels(&mut zip, "xl/_rels/workbook.xml.rels")?;
    let mut sheets = Vec::new();
    for n in xml_nodes(&workbook)? {
        if let Node::Start { name, attrs } = n {
            if name == "sheet" {
                let sheet_name = attrs.get("name").cloned().unwrap_or_default();
                if let Some((target, _)) = attrs.get("id").and_then(|id| relmap.get(id)) {
                    sheets.push((sheet_name, resolve("xl/workbook.xml", target)));
                }
            }
        }
    }
    if sheets.is_empty() {
        return Err(parse_error("workbook has no sheets"));
    }
    let mut pages = Vec::new();
    for (idx, (sheet_name, path)) in sheets.into_iter().enumerate() {
        let xml = read_part(&mut zip, &path)?.ok_or_else(|| parse_error(format!("missing {path}")))?;
        let nodes = xml_nodes(&xml).map_err(|e| IngestError::Parse { page: Some(idx as u32 + 1), message: e.to_string() })?;
        let mut lines = vec![sheet_name];
        let mut row: Vec<String> = Vec::new();
        let mut cell_col = 0usize;
        let mut cell_type = String::new();
        let mut value = String::new();
        let mut in_value = false;
        for n in nodes {
            match n {
                Node::Start { name, attrs } => match name.as_str() {
                    "row" => row.clear(),
                    "c" => {
                        cell_col = attrs.get("r").map_or(row.len(), |r| column_index(r));
                        cell_type = attrs.get("t").cloned().unwrap_or_default();
                        value.clear();
                    }
                    "v" | "t" => in_value = true,
                    _ => {}
                },
                Node::End { name } => match name.as_str() {
                    "v" | "t" => in_value = false,
                    "c" => {
                        let text = if cell_type == "s" {
                            value.trim().parse::<usize>().ok().and_then(|i| shared.get(i).cloned()).unwrap_or_default()
                        } else {
                            value.clone()
                        };
                        if row.len() <= cell_col {
                            row.resize(cell_col + 1, String::new());
                        }
                        row[cell_col] = text;
                    }
                    "row" => {
                        if row.iter().any(|c| !c.trim().is_empty()) {
                            lines.push(row.join("\t"));
                        }
                    }
                    _ => {}
                },
                Node::Text(t) if in_value => value.push_str(&t),
                Node::Text(_) => {}
            }
        }
        pages.push(RawPage { text: lines.join("\n"), images: vec![] });
    }
    let props = core_props(&mut zip)?;
    Ok(raw_document(props, pages))
}
