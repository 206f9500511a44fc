//! Tokenization helpers shared by the mock provider, ingestion and the
//! infomorph evaluators.

use std::collections::{BTreeMap, BTreeSet};

/// Words ignored when extracting prompt keywords.
pub const STOP_WORDS: &[&str] = &[
    "a", "about", "above", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could",
    "create", "did", "do", "does", "doing", "during", "each", "extract", "few", "find", "for",
    "from", "further", "get", "give", "had", "has", "have", "having", "he", "help", "her", "here",
    "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "like", "list",
    "looking", "make", "me", "more", "most", "my", "near", "need", "of", "off", "on", "once",
    "only", "or", "other", "our", "out", "over", "own", "page", "pages", "please", "same", "she",
    "should", "show", "so", "some", "such", "tell", "than", "that", "the", "their", "them",
    "then", "there", "these", "they", "this", "those", "through", "to", "too", "under", "until",
    "up", "us", "very", "want", "was", "we", "were", "what", "when", "where", "which", "while",
    "who", "whom", "why", "will", "with", "would", "you", "your",
];

/// Cue words that turn the rest of their clause into negative keywords.
pub const NEGATION_CUES: &[&str] = &["avoid", "avoiding", "exclude", "excluding", "without", "no", "not", "skip"];

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.binary_search(&token).is_ok()
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Tokens with stop words and negation cues removed, deduplicated,
/// in first-occurrence order.
pub fn keywords(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    tokenize(text)
        .into_iter()
        .filter(|t| !is_stop_word(t) && !NEGATION_CUES.contains(&t.as_str()))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Prompt keywords split into wanted and unwanted terms. A clause (text
/// between `.`, `;`, `!`, `?` or a newline) that contains a negation cue
/// contributes every keyword after the cue to the negative set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptTerms {
    pub positive: BTreeSet<String>,
    pub negative: BTreeSet<String>,
}

pub fn prompt_terms(prompt: &str) -> PromptTerms {
    let mut terms = PromptTerms::default();
    for clause in prompt.split(['.', ';', '!', '?', '\n']) {
        let tokens = tokenize(clause);
        let cue = tokens.iter().position(|t| NEGATION_CUES.contains(&t.as_str()));
        for (i, t) in tokens.iter().enumerate() {
            if is_stop_word(t) || NEGATION_CUES.contains(&t.as_str()) {
                continue;
            }
            match cue {
                Some(c) if i > c => terms.negative.insert(t.clone()),
                _ => terms.positive.insert(t.clone()),
            };
        }
    }
    let negative = terms.negative.clone();
    terms.positive.retain(|t| !negative.contains(t));
    terms
}

/// Splits on newlines and after `.`, `!` or `?` when followed by
/// whitespace (or end of text). Pieces are trimmed; empty ones dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\n' || c == '\u{c}' {
            push_sentence(&mut out, &mut current);
            continue;
        }
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            push_sentence(&mut out, &mut current);
        }
    }
    push_sentence(&mut out, &mut current);
    out
}

fn push_sentence(out: &mut Vec<String>, current: &mut String) {
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    current.clear();
}

/// Keyword term frequencies over all given sentences.
pub fn term_frequencies<'a>(sentences: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut tf = BTreeMap::new();
    for s in sentences {
        for t in tokenize(s) {
            if !is_stop_word(&t) {
                *tf.entry(t).or_insert(0) += 1;
            }
        }
    }
    tf
}

/// Highest-frequency keyword; ties go to the lexicographically smallest.
pub fn top_term(tf: &BTreeMap<String, usize>) -> Option<&str> {
    // BTreeMap iterates in ascending key order, so the first maximum wins.
    let mut best: Option<(&str, usize)> = None;
    for (t, &n) in tf {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((t, n));
        }
    }
    best.map(|(t, _)| t)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// First `n` words of `text`.
pub fn first_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}
