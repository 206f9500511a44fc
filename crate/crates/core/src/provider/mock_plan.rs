//! Mock planning rules. Each returns the plan serialized as JSON, exactly
//! what a real provider is asked to reply with.
//!
//! * **document**: with a prior document plan in the context its sections
//!   are kept verbatim; otherwise headings come from a `sections:` list in
//!   the prompt, or one section per source document. Every page contributes
//!   its extractive summary as a paragraph plus a citation, placed in the
//!   section whose heading and text share the most keywords with the page
//!   (ties: earliest; no overlap: last section).
//! * **slides**: a title slide with an empty `title-image` slot, then one
//!   slide per page, prior-plan section or table.
//! * **table**: columns named by a `columns:` list in the prompt; one row per
//!   context sentence carrying a money amount; rows grouped under the
//!   prompt's `categories like ...` list by keyword match.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use super::mock::summarize_text;
use super::text::{first_words, keywords, split_sentences, token_set, tokenize};
use super::{CompletionRequest, ContextItem};
use crate::content::{
    Block, Cell, Column, ColumnType, DocumentPlan, ImageSlot, RowGroup, Section, Slide, SlideDeckPlan, SlotState,
    TablePlan,
};

enum Item<'a> {
    Page { doc_id: &'a str, page: u32, ctx: &'a ContextItem },
    DocPlan(DocumentPlan),
    Slides(SlideDeckPlan),
    Table(TablePlan),
    Note(&'a ContextItem),
}

fn items(req: &CompletionRequest) -> Vec<Item<'_>> {
    req.context
        .iter()
        .map(|c| {
            if let Some((doc_id, page)) = c.page_ref() {
                return Item::Page { doc_id, page, ctx: c };
            }
            let r = c.reference.as_str();
            if r.starts_with("plan:document") {
                if let Ok(p) = serde_json::from_str(&c.text) {
                    return Item::DocPlan(p);
                }
            } else if r.starts_with("plan:slides") {
                if let Ok(p) = serde_json::from_str(&c.text) {
                    return Item::Slides(p);
                }
            } else if r.starts_with("plan:table") {
                if let Ok(p) = serde_json::from_str(&c.text) {
                    return Item::Table(p);
                }
            }
            Item::Note(c)
        })
        .collect()
}

/// Comma/semicolon separated list following `marker` (case-insensitive),
/// up to the end of that sentence.
pub(crate) fn list_after(prompt: &str, marker: &str) -> Option<Vec<String>> {
    let lower = prompt.to_lowercase();
    let start = lower.find(marker)? + marker.len();
    let rest = &prompt[start..];
    let mut end = rest.len();
    let bytes = rest.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'\n' || (b == b'.' && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace())) {
            end = i;
            break;
        }
    }
    let list: Vec<String> = rest[..end]
        .split([',', ';'])
        .map(|s| {
            let s = s.trim();
            let s = s.strip_prefix("and ").or_else(|| s.strip_prefix("or ")).unwrap_or(s);
            s.trim().to_string()
        })
        .filter(|s| !s.is_empty())
        .collect();
    (!list.is_empty()).then_some(list)
}

fn plan_text(plan: &DocumentPlan) -> Vec<(String, String)> {
    plan.sections
        .iter()
        .map(|s| {
            let body = s
                .blocks
                .iter()
                .filter_map(|b| match b {
                    Block::Paragraph { text } => Some(text.clone()),
                    Block::BulletList { items } => Some(items.join(". ")),
                    _ => None,
                })
                .collect::<Vec<_>>()
                .join(" ");
            (s.heading.clone(), body)
        })
        .collect()
}

fn best_section(sections: &[Section], text: &str) -> usize {
    let tokens = token_set(text);
    let mut best = (0usize, sections.len().saturating_sub(1));
    for (i, s) in sections.iter().enumerate() {
        let mut words: BTreeSet<String> = keywords(&s.heading).into_iter().collect();
        for b in &s.blocks {
            if let Block::Paragraph { text } = b {
                words.extend(keywords(text));
            }
        }
        let overlap = words.intersection(&tokens).count();
        if overlap > best.0 {
            best = (overlap, i);
        }
    }
    best.1
}

pub(crate) fn document(req: &CompletionRequest) -> String {
    let items = items(req);
    let priors: Vec<&DocumentPlan> = items
        .iter()
        .filter_map(|i| match i {
            Item::DocPlan(p) => Some(p),
            _ => None,
        })
        .collect();
    let by_document = priors.is_empty() && list_after(&req.prompt, "sections:").is_none();
    let mut sections: Vec<Section> = Vec::new();
    if let Some(first) = priors.first() {
        sections = first.sections.clone();
        for other in &priors[1..] {
            for s in &other.sections {
                if !sections.iter().any(|x| x.heading == s.heading) {
                    sections.push(s.clone());
                }
            }
        }
    } else if let Some(list) = list_after(&req.prompt, "sections:") {
        sections = list
            .into_iter()
            .map(|heading| Section { heading, blocks: vec![] })
            .collect();
    }
    let mut doc_sections: Vec<(String, usize)> = Vec::new();
    for item in &items {
        let (text, citation, doc) = match item {
            Item::Page { doc_id, page, ctx } => (
                summarize_text(&ctx.text),
                Some(Block::Citation { doc_id: doc_id.to_string(), page: *page }),
                Some((*doc_id, ctx.title.as_str())),
            ),
            Item::Note(c) => (summarize_text(&c.text), None, None),
            Item::Slides(p) => (
                p.slides.iter().map(|s| s.title.clone()).collect::<Vec<_>>().join(". "),
                None,
                None,
            ),
            Item::Table(t) => (
                t.rows.iter().map(|r| r.iter().map(Cell::display).collect::<Vec<_>>().join(" ")).collect::<Vec<_>>().join(". "),
                None,
                None,
            ),
            Item::DocPlan(_) => continue,
        };
        if text.trim().is_empty() {
            continue;
        }
        let target = match (by_document, doc) {
            (true, Some((doc_id, title))) => match doc_sections.iter().find(|(d, _)| d == doc_id) {
                Some((_, i)) => *i,
                None => {
                    let heading = if title.trim().is_empty() { doc_id.to_string() } else { title.to_string() };
                    sections.push(Section { heading, blocks: vec![] });
                    doc_sections.push((doc_id.to_string(), sections.len() - 1));
                    sections.len() - 1
                }
            },
            _ => {
                if sections.is_empty() {
                    sections.push(Section { heading: "Overview".into(), blocks: vec![] });
                }
                best_section(&sections, &text)
            }
        };
        sections[target].blocks.push(Block::Paragraph { text });
        if let Some(c) = citation {
            sections[target].blocks.push(c);
        }
    }
    if sections.is_empty() {
        sections.push(Section { heading: "Overview".into(), blocks: vec![] });
    }
    serde_json::to_string(&DocumentPlan { sections }).expect("plan serializes")
}

fn bullets(items: Vec<String>) -> Vec<Block> {
    if items.is_empty() {
        vec![]
    } else {
        vec![Block::BulletList { items }]
    }
}

pub(crate) fn slides(req: &CompletionRequest) -> String {
    let first = split_sentences(&req.prompt).into_iter().next().unwrap_or_default();
    let mut deck = vec![Slide {
        title: first_words(first.trim_end_matches(['.', '!', '?']), 8),
        blocks: vec![Block::Paragraph { text: format!("Drawn from {} sources", req.context.len()) }],
        image_slots: vec![ImageSlot { slot_id: "title-image".into(), state: SlotState::Empty }],
        notes: None,
    }];
    for item in items(req) {
        match item {
            Item::Page { doc_id, page, ctx } => {
                let sentences = split_sentences(&ctx.text);
                let title = if ctx.title.trim().is_empty() {
                    first_words(sentences.first().map(String::as_str).unwrap_or(doc_id), 8)
                } else {
                    format!("{} p.{page}", ctx.title)
                };
                deck.push(Slide {
                    title,
                    blocks: bullets(sentences.into_iter().take(3).collect()),
                    image_slots: ctx
                        .images
                        .iter()
                        .enumerate()
                        .map(|(i, h)| ImageSlot { slot_id: format!("img{}", i + 1), state: SlotState::Sourced { hash: *h } })
                        .collect(),
                    notes: Some(format!("Source: {doc_id} p.{page}")),
                });
            }
            Item::DocPlan(p) => {
                for s in &p.sections {
                    let items: Vec<String> = plan_text(&DocumentPlan { sections: vec![s.clone()] })
                        .into_iter()
                        .flat_map(|(_, body)| split_sentences(&body))
                        .take(4)
                        .collect();
                    let images: Vec<_> = s
                        .blocks
                        .iter()
                        .filter_map(|b| match b {
                            Block::ImageRef { hash } => Some(*hash),
                            _ => None,
                        })
                        .collect();
                    deck.push(Slide {
                        title: s.heading.clone(),
                        blocks: bullets(items),
                        image_slots: images
                            .into_iter()
                            .enumerate()
                            .map(|(i, hash)| ImageSlot { slot_id: format!("img{}", i + 1), state: SlotState::Sourced { hash } })
                            .collect(),
                        notes: None,
                    });
                }
            }
            Item::Slides(p) => deck.extend(p.slides),
            Item::Table(t) => deck.push(Slide {
                title: t.column_names().join(" / "),
                blocks: bullets(
                    t.rows
                        .iter()
                        .take(5)
                        .map(|r| r.iter().map(Cell::display).collect::<Vec<_>>().join(" | "))
                        .collect(),
                ),
                image_slots: vec![],
                notes: None,
            }),
            Item::Note(c) => deck.push(Slide {
                title: first_words(&c.reference, 8),
                blocks: bullets(split_sentences(&c.text).into_iter().take(3).collect()),
                image_slots: vec![],
                notes: None,
            }),
        }
    }
    serde_json::to_string(&SlideDeckPlan { slides: deck }).expect("plan serializes")
}

fn amount_patterns() -> &'static [Regex; 3] {
    static RE: OnceLock<[Regex; 3]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            Regex::new(r"\$\s?(\d[\d,]*(?:\.\d+)?)").unwrap(),
            Regex::new(r"(\d[\d,]*(?:\.\d+)?)\s?(USD|EUR|KRW|GBP|JPY)\b").unwrap(),
            Regex::new(r"\b(USD|EUR|KRW|GBP|JPY)\s?(\d[\d,]*(?:\.\d+)?)").unwrap(),
        ]
    })
}

/// Earliest money amount in `sentence`: (byte offset, amount, code).
pub(crate) fn find_amount(sentence: &str) -> Option<(usize, String, String)> {
    let [dollar, suffix, prefix] = amount_patterns();
    let mut found: Vec<(usize, String, String)> = Vec::new();
    if let Some(c) = dollar.captures(sentence) {
        found.push((c.get(0)?.start(), c[1].to_string(), "USD".into()));
    }
    if let Some(c) = suffix.captures(sentence) {
        found.push((c.get(0)?.start(), c[1].to_string(), c[2].to_string()));
    }
    if let Some(c) = prefix.captures(sentence) {
        found.push((c.get(0)?.start(), c[2].to_string(), c[1].to_string()));
    }
    let (at, raw, code) = found.into_iter().min_by_key(|f| f.0)?;
    let mut amount: String = raw.chars().filter(|&c| c != ',').collect();
    match amount.split_once('.') {
        None => amount.push_str(".00"),
        Some((_, frac)) if frac.len() == 1 => amount.push('0'),
        _ => {}
    }
    Some((at, amount, code))
}

const TRAILING_FILLER: &[&str] = &[
    "about", "approx", "approximately", "around", "at", "cost", "costs", "for", "is", "of", "total", "totaling",
    "was", "were", "-", ":", "=", "~",
];

fn item_label(sentence: &str, at: usize) -> String {
    let mut words: Vec<&str> = sentence[..at].split_whitespace().collect();
    loop {
        let Some(last) = words.last() else { break };
        let trimmed = last.trim_end_matches([',', ':', ';', '-', '(']);
        if trimmed.is_empty() || TRAILING_FILLER.contains(&trimmed.to_lowercase().as_str()) {
            words.pop();
        } else {
            break;
        }
    }
    let label = words.join(" ");
    let label = label.trim_end_matches([',', ':', ';', '-', '(', ' ']);
    let label = if label.is_empty() { first_words(sentence, 5) } else { label.to_string() };
    label.chars().take(60).collect()
}

fn category_words(category: &str) -> BTreeSet<String> {
    let mut words: BTreeSet<String> = tokenize(category).into_iter().map(singular).collect();
    let extra: &[&str] = match singular(category.to_lowercase()).as_str() {
        "flight" => &["airfare", "airline", "plane", "boarding", "airport"],
        "hotel" | "accommodation" | "lodging" => &["hotel", "accommodation", "room", "lodging", "hostel", "stay"],
        "food" | "meal" | "dining" => &["meal", "dinner", "lunch", "breakfast", "restaurant", "seafood", "cafe", "food", "snack"],
        "activity" | "activities" => &["tour", "museum", "admission", "entry", "village", "temple", "festival", "park", "ticket"],
        "transport" | "transportation" => &["taxi", "subway", "train", "bus", "ktx", "metro"],
        _ => &[],
    };
    words.extend(extra.iter().map(|s| s.to_string()));
    words
}

fn singular(word: String) -> String {
    if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") {
        word[..word.len() - 1].to_string()
    } else {
        word
    }
}

fn clean_category(raw: &str) -> String {
    let mut out = raw.trim();
    for cut in [" if ", " when ", " where ", " as "] {
        if let Some(i) = out.to_lowercase().find(cut) {
            out = out[..i].trim();
        }
    }
    out.to_string()
}

fn column_type(name: &str) -> ColumnType {
    let lower = name.to_lowercase();
    let has_code = Regex::new(r"\(([A-Z]{3})\)").unwrap().is_match(name);
    if has_code || ["cost", "price", "amount", "budget", "fee"].iter().any(|k| lower.contains(k)) {
        ColumnType::Currency
    } else if ["qty", "quantity", "count"].iter().any(|k| lower.contains(k)) {
        ColumnType::Number
    } else {
        ColumnType::Text
    }
}

pub(crate) fn table(req: &CompletionRequest) -> String {
    let names = list_after(&req.prompt, "columns:").unwrap_or_else(|| vec!["Item".into(), "Amount".into(), "Notes".into()]);
    let columns: Vec<Column> = names
        .into_iter()
        .map(|name| Column { column_type: column_type(&name), name })
        .collect();
    let item_col = columns.iter().position(|c| c.column_type == ColumnType::Text);
    let notes_col = columns.iter().enumerate().position(|(i, c)| {
        let lower = c.name.to_lowercase();
        Some(i) != item_col && ["note", "source", "comment", "remark"].iter().any(|k| lower.contains(k))
    });
    let categories: Vec<String> = ["categories like", "categories such as", "categories:"]
        .iter()
        .find_map(|m| list_after(&req.prompt, m))
        .unwrap_or_default()
        .iter()
        .map(|c| clean_category(c))
        .filter(|c| !c.is_empty())
        .collect();
    let category_sets: Vec<BTreeSet<String>> = categories.iter().map(|c| category_words(c)).collect();

    let mut sources: Vec<(String, String)> = Vec::new();
    for item in items(req) {
        match item {
            Item::Page { doc_id, page, ctx } => {
                let label = if ctx.title.is_empty() { doc_id.to_string() } else { ctx.title.clone() };
                sources.push((format!("Source: {label} p.{page}"), ctx.text.clone()));
            }
            Item::DocPlan(p) => {
                for (heading, body) in plan_text(&p) {
                    sources.push((format!("Source: plan section {heading}"), body));
                }
            }
            Item::Note(c) => sources.push((format!("Source: {}", c.reference), c.text.clone())),
            Item::Slides(_) | Item::Table(_) => {}
        }
    }

    let mut rows: Vec<(usize, Vec<Cell>)> = Vec::new();
    for (note, text) in &sources {
        for sentence in split_sentences(text) {
            let Some((at, amount, code)) = find_amount(&sentence) else { continue };
            let tokens: BTreeSet<String> = tokenize(&sentence).into_iter().map(singular).collect();
            let category = category_sets
                .iter()
                .position(|set| !set.is_disjoint(&tokens))
                .unwrap_or(categories.len());
            let cells = columns
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if Some(i) == item_col {
                        Cell::Text(item_label(&sentence, at))
                    } else if Some(i) == notes_col {
                        Cell::Text(note.clone())
                    } else {
                        match c.column_type {
                            ColumnType::Currency => Cell::Currency { amount: amount.clone(), code: code.clone() },
                            ColumnType::Number => Cell::Number(amount.parse().unwrap_or(0.0)),
                            ColumnType::Text => Cell::Text(String::new()),
                        }
                    }
                })
                .collect();
            rows.push((category, cells));
        }
    }
    rows.sort_by_key(|r| r.0);
    let groups = (!categories.is_empty()).then(|| {
        let mut groups: Vec<RowGroup> = Vec::new();
        for (i, (cat, _)) in rows.iter().enumerate() {
            let label = categories.get(*cat).cloned().unwrap_or_else(|| "Other".into());
            match groups.last_mut() {
                Some(g) if g.label == label => g.end = i + 1,
                _ => groups.push(RowGroup { label, start: i, end: i + 1 }),
            }
        }
        groups
    });
    let plan = TablePlan { columns, rows: rows.into_iter().map(|r| r.1).collect(), groups };
    serde_json::to_string(&plan).expect("plan serializes")
}
