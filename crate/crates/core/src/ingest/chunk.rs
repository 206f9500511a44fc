//! Splitting long text into overlapping, sentence-aligned chunks.

/// Maximum chunk length in characters.
pub const CHUNK_MAX: usize = 1600;
/// Characters shared by adjacent chunks.
pub const CHUNK_OVERLAP: usize = 200;
/// A chunk ends at a sentence boundary only if it is at least this long.
pub const CHUNK_MIN: usize = 400;

/// Character ranges `[start, end)` covering `text`.
///
/// A chunk starting at `s` ends at the last sentence boundary within
/// `[s + 400, s + 1600]`, or at `s + 1600` when there is none. The next
/// chunk starts exactly 200 characters before that end. A sentence boundary
/// is a position right after `.`, `!` or `?` followed by whitespace or the
/// end of text, or right after a newline.
pub fn chunk_ranges(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let is_boundary = |e: usize| {
        let prev = chars[e - 1];
        prev == '\n' || (matches!(prev, '.' | '!' | '?') && (e == n || chars[e].is_whitespace()))
    };
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut start = 0;
    loop {
        let hard = (start + CHUNK_MAX).min(n);
        if hard == n {
            out.push((start, n));
            return out;
        }
        let end = (start + CHUNK_MIN..=hard).rev().find(|&e| is_boundary(e)).unwrap_or(hard);
        out.push((start, end));
        start = end - CHUNK_OVERLAP;
    }
}

pub fn chunk_text(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    chunk_ranges(text)
        .into_iter()
        .map(|(s, e)| chars[s..e].iter().collect())
        .collect()
}
