//! Unicode helpers shared by the corpus loader, the grounding filter and scoring.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// NFC-normalizes `s`.
pub fn nfc(s: &str) -> String {
    s.nfc().collect()
}

/// Characters that belong to a word. Everything else (whitespace,
/// punctuation, `#`, `@`) is a boundary.
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Canonical comparison key for an entity surface.
///
/// NFC, lowercase, every `#`/`@` removed, internal whitespace collapsed to a
/// single space and leading/trailing non-word characters trimmed. Internal
/// punctuation is kept, so `"St. Johns River"` stays `"st. johns river"`.
pub fn normalize_entity(s: &str) -> String {
    // Sigils go first: removing one can bring two combining marks together.
    let stripped: String = s.chars().filter(|c| *c != '#' && *c != '@').collect();
    let lowered = nfc(&nfc(&stripped).to_lowercase());
    let collapsed = collapse_whitespace(&lowered);
    nfc(collapsed.trim_matches(|c: char| !is_word_char(c)))
}

/// Joins whitespace-separated pieces with single spaces.
pub fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for piece in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(piece);
    }
    out
}

/// Number of Unicode scalar values in `s`. Span offsets count these.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Slices `s` by character offsets, `None` when out of bounds.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = s.char_indices().map(|(i, _)| i).chain(core::iter::once(s.len()));
    let from = indices.nth(start)?;
    let to = if end == start {
        from
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&s[from..to])
}

/// Whitespace-delimited tokens as character ranges.
pub fn whitespace_tokens(s: &str) -> Vec<Range<usize>> {
    let mut tokens = Vec::new();
    let mut start = None;
    let mut idx = 0;
    for c in s.chars() {
        match (c.is_whitespace(), start) {
            (true, Some(st)) => {
                tokens.push(st..idx);
                start = None;
            }
            (false, None) => start = Some(idx),
            _ => {}
        }
        idx += 1;
    }
    if let Some(st) = start {
        tokens.push(st..idx);
    }
    tokens
}
