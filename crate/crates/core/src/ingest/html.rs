//! Main-text extraction from HTML.
//!
//! The page is parsed leniently into an element tree. Among `body`, `main`,
//! `article`, `section`, `div` and `td` elements, the one maximizing
//! `text_len * text_len / source_len` (text length times text density) is
//! taken as the main content; ties go to the earliest element. Scripts,
//! styles, navigation, headers, footers and asides are never counted.

const VOID: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track", "wbr",
];
const SKIP: &[&str] = &["aside", "footer", "head", "header", "nav", "noscript", "script", "style", "template"];
const CANDIDATES: &[&str] = &["article", "body", "div", "main", "section", "td"];
const BREAKS: &[&str] = &[
    "blockquote", "br", "dd", "div", "dt", "h1", "h2", "h3", "h4", "h5", "h6", "li", "p", "pre", "section", "tr",
    "article", "main", "table", "ul", "ol",
];

#[derive(Debug)]
enum Child {
    Text(String),
    Element(usize),
}

#[derive(Debug)]
struct Element {
    name: String,
    start: usize,
    end: usize,
    children: Vec<Child>,
}

pub fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let Some(semi) = rest[..rest.len().min(12)].find(';') else {
            out.push('&');
            rest = &rest[1..];
            continue;
        };
        let name = &rest[1..semi];
        let decoded = match name {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some(' '),
            _ if name.starts_with("#x") || name.starts_with("#X") => {
                u32::from_str_radix(&name[2..], 16).ok().and_then(char::from_u32)
            }
            _ if name.starts_with('#') => name[1..].parse().ok().and_then(char::from_u32),
            _ => None,
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[semi + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

struct Parsed {
    elements: Vec<Element>,
    title: Option<String>,
}

fn tag_name(tag: &str) -> String {
    tag.trim_start_matches('/')
        .split(|c: char| c.is_whitespace() || c == '/' || c == '>')
        .next()
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn parse(src: &str) -> Parsed {
    let mut elements = vec![Element { name: "#root".into(), start: 0, end: src.len(), children: vec![] }];
    let mut stack = vec![0usize];
    let mut title = None;
    let mut i = 0;
    let bytes = src.as_bytes();
    while i < src.len() {
        if bytes[i] != b'<' {
            let next = src[i..].find('<').map_or(src.len(), |j| i + j);
            let top = *stack.last().unwrap();
            elements[top].children.push(Child::Text(src[i..next].to_string()));
            i = next;
            continue;
        }
        if src[i..].starts_with("<!--") {
            i = src[i..].find("-->").map_or(src.len(), |j| i + j + 3);
            continue;
        }
        let Some(close) = src[i..].find('>').map(|j| i + j) else {
            let top = *stack.last().unwrap();
            elements[top].children.push(Child::Text(src[i..].to_string()));
            break;
        };
        let tag = &src[i + 1..close];
        let after = close + 1;
        if tag.starts_with('!') || tag.starts_with('?') {
            i = after;
            continue;
        }
        let name = tag_name(tag);
        if tag.starts_with('/') {
            if let Some(pos) = stack.iter().rposition(|&e| elements[e].name == name) {
                if pos > 0 {
                    for &e in &stack[pos..] {
                        elements[e].end = after;
                    }
                    stack.truncate(pos);
                }
            }
            i = after;
            continue;
        }
        if matches!(name.as_str(), "script" | "style" | "title") {
            let end_tag = format!("</{name}");
            let body_end = src[after..].to_ascii_lowercase().find(&end_tag).map_or(src.len(), |j| after + j);
            if name == "title" && title.is_none() {
                title = Some(collapse(&decode_entities(&src[after..body_end])));
            }
            let end = src[body_end..].find('>').map_or(src.len(), |j| body_end + j + 1);
            i = end;
            continue;
        }
        let id = elements.len();
        elements.push(Element { name: name.clone(), start: i, end: src.len(), children: vec![] });
        let top = *stack.last().unwrap();
        elements[top].children.push(Child::Element(id));
        if VOID.contains(&name.as_str()) || tag.ends_with('/') {
            elements[id].end = after;
        } else {
            stack.push(id);
        }
        i = after;
    }
    Parsed { elements, title }
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn collect_text(elements: &[Element], id: usize, out: &mut String) {
    let el = &elements[id];
    if SKIP.contains(&el.name.as_str()) {
        return;
    }
    let breaks = BREAKS.contains(&el.name.as_str());
    if breaks {
        out.push('\n');
    }
    for child in &el.children {
        match child {
            Child::Text(t) => out.push_str(&decode_entities(t)),
            Child::Element(c) => collect_text(elements, *c, out),
        }
    }
    if breaks {
        out.push('\n');
    }
}

/// Readable text: whitespace collapsed within lines, one line per block.
fn block_text(elements: &[Element], id: usize) -> String {
    let mut raw = String::new();
    collect_text(elements, id, &mut raw);
    raw.lines().map(collapse).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MainText {
    pub title: Option<String>,
    pub text: String,
}

pub fn extract_main_text(src: &str) -> MainText {
    let parsed = parse(src);
    let mut best: Option<(f64, String)> = None;
    for (id, el) in parsed.elements.iter().enumerate() {
        if !CANDIDATES.contains(&el.name.as_str()) {
            continue;
        }
        let text = block_text(&parsed.elements, id);
        let len = text.chars().count() as f64;
        let span = (el.end - el.start).max(1) as f64;
        let score = len * len / span;
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, text));
        }
    }
    let text = match best {
        Some((_, t)) => t,
        None => block_text(&parsed.elements, 0),
    };
    MainText { title: parsed.title.filter(|t| !t.is_empty()), text }
}
