//! Deterministic, offline provider.
//!
//! Rules (all pure functions of the inputs):
//!
//! * **summarize**: split the context into sentences, find the keyword with
//!   the highest term frequency (ties: lexicographically smallest). The
//!   summary is the first sentence, followed by the first sentence that
//!   contains that keyword when it is a different sentence. Clamped to 480
//!   characters.
//! * **chat**: the (at most two) context sentences sharing the most
//!   keywords with the question, each followed by its page marker `[p.N]`;
//!   `no relevant content` when nothing overlaps.
//! * **plan:***: see `mock_plan`; replies are JSON plans.
//! * **embed**: signed feature hashing of lowercased alphanumeric tokens
//!   into 256 buckets (FNV-1a 64: bucket `h % 256`, sign from the top bit),
//!   L2-normalized. Image mode uses the byte-value histogram of the image
//!   bytes. Multimodal is the normalized sum of both.
//! * **judge**: with `P`/`N` the wanted/unwanted prompt keywords and `T`
//!   the page tokens, `score = |P∩T|/|P| * (1 - |N∩T|/|N|)` (an empty `P`
//!   counts as full overlap, an empty `N` as no penalty).
//! * **images**: 16x16 solid-color PNGs. Generated color comes from
//!   `sha256("generate", model, prompt)`; restyled color XORs
//!   `sha256("restyle", model, prompt)` with a seed derived from the source
//!   image's byte histogram. A text chunk records the provenance.

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::text::{self, fnv1a64, prompt_terms, split_sentences, term_frequencies, token_set, top_term};
use super::{mock_plan, prompts, CompletionRequest, EmbedItem, EmbedMode, Judgment, Provider, ProviderError};
use crate::content::{clamp_summary, Page};
use crate::embedding::{Embedding, DIM};
use crate::hash::ContentHash;
use crate::store::BlobStore;

/// Default completion context budget (bytes).
pub const DEFAULT_CONTEXT_BUDGET: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct MockProvider {
    context_budget: usize,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl MockProvider {
    pub fn new() -> Self {
        Self {
            context_budget: DEFAULT_CONTEXT_BUDGET,
        }
    }

    pub fn with_context_budget(context_budget: usize) -> Self {
        Self { context_budget }
    }
}

/// The extractive summary rule.
pub fn summarize_sentences(sentences: &[String]) -> String {
    let Some(first) = sentences.first() else {
        return String::new();
    };
    let tf = term_frequencies(sentences.iter().map(String::as_str));
    let mut out = first.clone();
    if let Some(term) = top_term(&tf) {
        let hit = sentences
            .iter()
            .position(|s| text::tokenize(s).iter().any(|t| t == term));
        if let Some(j) = hit.filter(|&j| j != 0) {
            out.push(' ');
            out.push_str(&sentences[j]);
        }
    }
    clamp_summary(&out)
}

pub fn summarize_text(text: &str) -> String {
    summarize_sentences(&split_sentences(text))
}

fn chat_answer(req: &CompletionRequest) -> String {
    let wanted = prompt_terms(&req.prompt).positive;
    let mut scored: Vec<(usize, usize, String)> = Vec::new();
    let mut order = 0;
    for item in &req.context {
        let marker = item
            .page_ref()
            .map(|(_, p)| format!(" [p.{p}]"))
            .unwrap_or_default();
        for s in split_sentences(&item.text) {
            let overlap = token_set(&s).intersection(&wanted).count();
            if overlap > 0 {
                scored.push((overlap, order, format!("{s}{marker}")));
            }
            order += 1;
        }
    }
    if scored.is_empty() {
        return "no relevant content".to_string();
    }
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut best: Vec<_> = scored.into_iter().take(2).collect();
    best.sort_by_key(|x| x.1);
    best.into_iter().map(|x| x.2).collect::<Vec<_>>().join(" ")
}

pub(crate) fn text_vector(text: &str) -> [f64; DIM] {
    let mut raw = [0.0f64; DIM];
    for token in text::tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let bucket = (h % DIM as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        raw[bucket] += sign;
    }
    raw
}

fn image_vector(images: &[Vec<u8>]) -> [f64; DIM] {
    let mut raw = [0.0f64; DIM];
    for img in images {
        for &b in img {
            raw[b as usize] += 1.0;
        }
    }
    raw
}

fn unit(raw: &[f64; DIM]) -> [f64; DIM] {
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out = [0.0; DIM];
    if norm > 0.0 {
        for (o, r) in out.iter_mut().zip(raw) {
            *o = r / norm;
        }
    }
    out
}

pub fn mock_embedding(mode: EmbedMode, item: &EmbedItem) -> Embedding {
    let raw = match mode {
        EmbedMode::Text => text_vector(&item.text),
        EmbedMode::Image => image_vector(&item.images),
        EmbedMode::Multimodal => {
            let t = unit(&text_vector(&item.text));
            let i = unit(&image_vector(&item.images));
            let mut sum = [0.0; DIM];
            for k in 0..DIM {
                sum[k] = t[k] + i[k];
            }
            sum
        }
    };
    Embedding::normalized(&raw)
}

/// The judge rule, exposed for tests and triage.
pub fn mock_judge(page_text: &str, prompt: &str, threshold: f64) -> Judgment {
    let terms = prompt_terms(prompt);
    let tokens = token_set(page_text);
    let matched: Vec<&str> = terms.positive.iter().filter(|t| tokens.contains(*t)).map(String::as_str).collect();
    let excluded: Vec<&str> = terms.negative.iter().filter(|t| tokens.contains(*t)).map(String::as_str).collect();
    let pos = if terms.positive.is_empty() {
        1.0
    } else {
        matched.len() as f64 / terms.positive.len() as f64
    };
    let neg = if terms.negative.is_empty() {
        0.0
    } else {
        excluded.len() as f64 / terms.negative.len() as f64
    };
    let list = |v: &[&str]| if v.is_empty() { "none".to_string() } else { v.join(", ") };
    let rationale = format!("matched: {}; excluded: {}", list(&matched), list(&excluded));
    Judgment::from_score(pos * (1.0 - neg), threshold, rationale)
}

fn solid_png(rgb: [u8; 3], note: &str) -> Vec<u8> {
    const SIZE: u32 = 16;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, SIZE, SIZE);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("infomorph".to_string(), note.to_string())
            .expect("text chunk is valid latin-1 keyword");
        let mut writer = enc.write_header().expect("in-memory png header");
        let data: Vec<u8> = (0..SIZE * SIZE).flat_map(|_| rgb).collect();
        writer.write_image_data(&data).expect("in-memory png data");
    }
    out
}

fn digest3(parts: &[&[u8]]) -> [u8; 3] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    [d[0], d[1], d[2]]
}

fn histogram_seed(bytes: &[u8]) -> [u8; 3] {
    let mut hist = [0u32; 256];
    for &b in bytes {
        hist[b as usize] += 1;
    }
    let flat: Vec<u8> = hist.iter().flat_map(|n| n.to_le_bytes()).collect();
    digest3(&[&flat])
}

fn ascii_note(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii() && !c.is_ascii_control() { c } else { '?' }).collect()
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn params(&self) -> Value {
        json!({"kind": "mock", "rules": 1, "context_budget": self.context_budget})
    }

    fn default_model(&self) -> &str {
        "mock-1"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        req.check(self.context_budget)?;
        let task = prompts::task_of(&req.system);
        Ok(match task {
            "summarize" => {
                let sentences: Vec<String> = req.context.iter().flat_map(|c| split_sentences(&c.text)).collect();
                summarize_sentences(&sentences)
            }
            "chat" => chat_answer(req),
            "plan:document" => mock_plan::document(req),
            "plan:slides" => mock_plan::slides(req),
            "plan:table" => mock_plan::table(req),
            _ => {
                // Echo the directive, then the leading context sentences.
                let lead: Vec<String> = req.context.iter().flat_map(|c| split_sentences(&c.text)).take(3).collect();
                format!("{}\n{}", req.prompt.trim(), lead.join(" "))
            }
        })
    }

    fn embed(&self, _model: &str, mode: EmbedMode, items: &[EmbedItem]) -> Result<Vec<Embedding>, ProviderError> {
        if items.is_empty() {
            return Err(ProviderError::InvalidRequest("no items to embed".into()));
        }
        Ok(items.iter().map(|i| mock_embedding(mode, i)).collect())
    }

    fn judge(&self, _model: &str, page: &Page, prompt: &str, threshold: f64) -> Result<Judgment, ProviderError> {
        if page.text.trim().is_empty() && page.image_refs.is_empty() {
            return Err(ProviderError::InvalidRequest("page has neither text nor images".into()));
        }
        Ok(mock_judge(&page.text, prompt, threshold))
    }

    fn generate_image(&self, model: &str, prompt: &str, blobs: &dyn BlobStore) -> Result<ContentHash, ProviderError> {
        let rgb = digest3(&[b"generate", model.as_bytes(), prompt.as_bytes()]);
        let png = solid_png(rgb, &format!("generate:{}", ascii_note(prompt)));
        blobs.put_blob(&png).map_err(|e| ProviderError::Store(e.to_string()))
    }

    fn restyle_image(
        &self,
        model: &str,
        source: &ContentHash,
        prompt: &str,
        blobs: &dyn BlobStore,
    ) -> Result<ContentHash, ProviderError> {
        let bytes = blobs
            .get_blob(source)
            .map_err(|e| ProviderError::Store(e.to_string()))?
            .ok_or(ProviderError::MissingBlob(*source))?;
        let seed = histogram_seed(&bytes);
        let base = digest3(&[b"restyle", model.as_bytes(), prompt.as_bytes()]);
        let rgb = [base[0] ^ seed[0], base[1] ^ seed[1], base[2] ^ seed[2]];
        let png = solid_png(rgb, &format!("restyle:{source}:{}", ascii_note(prompt)));
        blobs.put_blob(&png).map_err(|e| ProviderError::Store(e.to_string()))
    }
}
