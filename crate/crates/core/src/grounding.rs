//! Grounding filter: every predicted entity must occur in the source post.
//!
//! For the all-locations task an entity absent from the text is removed and a
//! claimed frequency above the true occurrence count is reduced to it. For the
//! impact task entities are only checked for presence. Duplicate predictions
//! are merged on [`normalize_entity`] before checking, keeping the first
//! surface form and summing claimed counts.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prediction::{ImpactPrediction, LocationEntry, LocationPrediction};
use crate::text::{collapse_whitespace, is_word_char, nfc, normalize_entity};

/// How predicted strings are matched against the post text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchPolicy {
    pub case_insensitive: bool,
    /// Treat `#Mati` and `@Mati` as `Mati`.
    pub strip_hash_and_at: bool,
    pub unicode_nfc: bool,
    /// Match whole word-token sequences rather than raw substrings.
    pub word_boundary: bool,
    /// In substring mode, a match touching a hashtag must cover the whole
    /// hashtag body (so `Kerala` never matches inside `#Keralafloods`).
    /// Token matching always behaves this way.
    pub whole_hashtag_only: bool,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        MatchPolicy {
            case_insensitive: true,
            strip_hash_and_at: true,
            unicode_nfc: true,
            word_boundary: true,
            whole_hashtag_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundingError {
    #[error("entity has no matchable content")]
    EmptyEntity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    text: String,
}

fn prepare(s: &str, policy: &MatchPolicy) -> String {
    let s = if policy.unicode_nfc { nfc(s) } else { String::from(s) };
    if policy.case_insensitive {
        s.to_lowercase()
    } else {
        s
    }
}

fn is_sigil(c: char) -> bool {
    c == '#' || c == '@'
}

fn tokenize(prepared: &str, policy: &MatchPolicy) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut buf = String::new();
    let mut chars = prepared.chars().peekable();
    while let Some(c) = chars.next() {
        if is_word_char(c) {
            buf.push(c);
            continue;
        }
        if is_sigil(c) && policy.strip_hash_and_at {
            continue;
        }
        if !buf.is_empty() {
            tokens.push(Token {
                text: core::mem::take(&mut buf),
            });
        }
        if is_sigil(c) && !policy.strip_hash_and_at && chars.peek().is_some_and(|n| is_word_char(*n)) {
            buf.push(c);
        }
    }
    if !buf.is_empty() {
        tokens.push(Token { text: buf });
    }
    tokens
}

/// Substring-mode view of a text: sigils optionally removed, whitespace
/// collapsed, hashtag bodies recorded as byte ranges.
struct Flat {
    text: String,
    hashtags: Vec<Range<usize>>,
}

fn flatten(prepared: &str, policy: &MatchPolicy) -> Flat {
    let mut text = String::with_capacity(prepared.len());
    let mut hashtags = Vec::new();
    let mut open: Option<usize> = None;
    let mut chars = prepared.chars().peekable();
    while let Some(c) = chars.next() {
        if !is_word_char(c) {
            if let Some(start) = open.take() {
                hashtags.push(start..text.len());
            }
        }
        if c.is_whitespace() {
            if !text.is_empty() && !text.ends_with(' ') {
                text.push(' ');
            }
        } else if is_sigil(c) {
            if !policy.strip_hash_and_at {
                text.push(c);
            }
            if c == '#' && chars.peek().is_some_and(|n| is_word_char(*n)) {
                open = Some(text.len());
            }
        } else {
            text.push(c);
        }
    }
    if let Some(start) = open {
        hashtags.push(start..text.len());
    }
    Flat { text, hashtags }
}

fn flatten_entity(entity: &str, policy: &MatchPolicy) -> String {
    let prepared = prepare(entity, policy);
    let kept: String = if policy.strip_hash_and_at {
        prepared.chars().filter(|c| !is_sigil(*c)).collect()
    } else {
        prepared
    };
    let collapsed = collapse_whitespace(&kept);
    let trimmed = collapsed
        .trim_end_matches(|c: char| !is_word_char(c))
        .trim_start_matches(|c: char| !is_word_char(c) && !(is_sigil(c) && !policy.strip_hash_and_at));
    String::from(trimmed)
}

enum Prepared {
    Tokens(Vec<Token>),
    Flat(Flat),
}

/// A post text prepared once for repeated occurrence counting.
pub struct SourceText {
    policy: MatchPolicy,
    prepared: Prepared,
}

impl SourceText {
    pub fn new(text: &str, policy: &MatchPolicy) -> Self {
        let p = prepare(text, policy);
        let prepared = if policy.word_boundary {
            Prepared::Tokens(tokenize(&p, policy))
        } else {
            Prepared::Flat(flatten(&p, policy))
        };
        SourceText {
            policy: *policy,
            prepared,
        }
    }

    /// Non-overlapping occurrences of `entity`, scanning left to right.
    pub fn count(&self, entity: &str) -> Result<usize, GroundingError> {
        match &self.prepared {
            Prepared::Tokens(tokens) => {
                let needle = tokenize(&prepare(entity, &self.policy), &self.policy);
                if needle.is_empty() {
                    return Err(GroundingError::EmptyEntity);
                }
                let mut count = 0;
                let mut i = 0;
                while i + needle.len() <= tokens.len() {
                    if tokens[i..i + needle.len()] == needle[..] {
                        count += 1;
                        i += needle.len();
                    } else {
                        i += 1;
                    }
                }
                Ok(count)
            }
            Prepared::Flat(flat) => {
                let needle = flatten_entity(entity, &self.policy);
                if needle.is_empty() {
                    return Err(GroundingError::EmptyEntity);
                }
                let mut count = 0;
                let mut pos = 0;
                while let Some(found) = flat.text[pos..].find(&needle) {
                    let start = pos + found;
                    let end = start + needle.len();
                    if self.policy.whole_hashtag_only && !self.respects_hashtags(flat, start, end) {
                        pos = start + flat.text[start..].chars().next().map_or(1, char::len_utf8);
                        continue;
                    }
                    count += 1;
                    pos = end;
                }
                Ok(count)
            }
        }
    }

    fn respects_hashtags(&self, flat: &Flat, start: usize, end: usize) -> bool {
        flat.hashtags.iter().all(|body| {
            let touches = start < body.end && body.start < end;
            let sigil_start = !self.policy.strip_hash_and_at && start + 1 == body.start;
            !touches || (end == body.end && (start == body.start || sigil_start))
        })
    }
}

/// Occurrences of `entity` in `text` under `policy`.
pub fn occurrence_count(text: &str, entity: &str, policy: &MatchPolicy) -> Result<usize, GroundingError> {
    SourceText::new(text, policy).count(entity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Kept,
    /// Present, but the claimed frequency exceeded the true count.
    Capped,
    /// Not present in the text.
    Removed,
}

/// One merged prediction and the filter's decision about it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCheck {
    pub surface: String,
    /// Summed claimed frequency; `None` for the impact task.
    pub claimed: Option<u32>,
    pub actual: usize,
    /// How many raw predictions were merged into this entry.
    pub merged: usize,
    pub verdict: Verdict,
}

impl EntityCheck {
    fn kept_count(&self) -> Option<u32> {
        match self.verdict {
            Verdict::Removed => None,
            _ => Some(match self.claimed {
                Some(c) => c.min(self.actual as u32),
                None => self.actual as u32,
            }),
        }
    }
}

fn merge<'a>(items: impl Iterator<Item = (&'a str, Option<u32>)>) -> Vec<(&'a str, Option<u32>, usize)> {
    let mut order: Vec<(&str, Option<u32>, usize)> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (surface, claimed) in items {
        let key = normalize_entity(surface);
        match index.get(&key) {
            Some(&i) => {
                let slot = &mut order[i];
                slot.1 = match (slot.1, claimed) {
                    (Some(a), Some(b)) => Some(a.saturating_add(b)),
                    (a, b) => a.or(b),
                };
                slot.2 += 1;
            }
            None => {
                index.insert(key, order.len());
                order.push((surface, claimed, 1));
            }
        }
    }
    order
}

fn check(src: &SourceText, surface: &str, claimed: Option<u32>, merged: usize) -> EntityCheck {
    let actual = src.count(surface).unwrap_or(0);
    let verdict = match claimed {
        _ if actual == 0 => Verdict::Removed,
        Some(c) if c as usize > actual => Verdict::Capped,
        _ => Verdict::Kept,
    };
    EntityCheck {
        surface: String::from(surface),
        claimed,
        actual,
        merged,
        verdict,
    }
}

/// Per-entity decisions for an all-locations prediction.
pub fn check_all_locations(pred: &LocationPrediction, text: &str, policy: &MatchPolicy) -> Vec<EntityCheck> {
    let src = SourceText::new(text, policy);
    merge(pred.entries.iter().map(|e| (e.surface.as_str(), Some(e.count))))
        .into_iter()
        .map(|(s, c, n)| check(&src, s, c, n))
        .collect()
}

/// Per-entity decisions for one list of an impact prediction.
pub fn check_entities<S: AsRef<str>>(items: &[S], text: &str, policy: &MatchPolicy) -> Vec<EntityCheck> {
    let src = SourceText::new(text, policy);
    merge(items.iter().map(|s| (s.as_ref(), None)))
        .into_iter()
        .map(|(s, c, n)| check(&src, s, c, n))
        .collect()
}

/// Merges duplicates, removes entities absent from `text` and caps counts at
/// the true occurrence count. First-appearance order is kept.
pub fn filter_all_locations(pred: &LocationPrediction, text: &str, policy: &MatchPolicy) -> LocationPrediction {
    let entries = check_all_locations(pred, text, policy)
        .into_iter()
        .filter_map(|c| c.kept_count().map(|n| LocationEntry::new(c.surface, n)))
        .collect();
    LocationPrediction { entries }
}

/// Merges duplicates and removes impacts and locations absent from `text`.
pub fn filter_impact_extraction(pred: &ImpactPrediction, text: &str, policy: &MatchPolicy) -> ImpactPrediction {
    let keep = |items: &[String]| -> Vec<String> {
        check_entities(items, text, policy)
            .into_iter()
            .filter(|c| c.verdict != Verdict::Removed)
            .map(|c| c.surface)
            .collect()
    };
    ImpactPrediction {
        impacts: keep(&pred.impacts),
        impacted_locations: keep(&pred.impacted_locations),
    }
}
