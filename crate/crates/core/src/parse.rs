//! Free-text model output to structured predictions.
//!
//! The parser anchors on the *last* header line of each kind, so reasoning
//! drafts emitted before the final answer are ignored. All tolerance rules
//! live in [`NORMALIZATION`].

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prediction::{ImpactPrediction, LocationEntry, LocationPrediction, Prediction};
use crate::prompting::{Task, IMPACTED_LOCATIONS_HEADER, IMPACTS_HEADER, LOCATIONS_HEADER};
use crate::text::collapse_whitespace;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("no `{0}` header line in the response")]
    MissingHeader(&'static str),
}

/// Accepted header spellings and cleanup characters.
pub struct Normalization {
    /// Lowercase header prefixes, colon included.
    pub location_headers: &'static [&'static str],
    pub impact_headers: &'static [&'static str],
    pub impacted_location_headers: &'static [&'static str],
    /// Whole payloads that mean "nothing found".
    pub empty_payloads: &'static [&'static str],
    /// Markdown decoration stripped around header lines and payloads.
    pub decoration: &'static [char],
    /// Stripped from both ends of each entry.
    pub quotes: &'static [char],
}

pub const NORMALIZATION: Normalization = Normalization {
    location_headers: &["locations mentioned:", "location mentioned:"],
    impact_headers: &[
        "types of impact:",
        "types of impacts:",
        "type of impact:",
        "type of impacts:",
    ],
    impacted_location_headers: &["impacted location:", "impacted locations:"],
    empty_payloads: &[
        "none",
        "n/a",
        "na",
        "nil",
        "null",
        "-",
        "[]",
        "no locations",
        "not mentioned",
    ],
    decoration: &['*', '_', '#', '>', '`', '-', ' ', '\t'],
    quotes: &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'],
};

struct HeaderHit<'a> {
    line: usize,
    payload: &'a str,
}

/// Matches `alias` at the start of `body`, ASCII case-insensitively, with any
/// whitespace run standing in for a space. Returns the rest of `body`.
fn match_prefix<'a>(body: &'a str, alias: &str) -> Option<&'a str> {
    let mut rest = body;
    for want in alias.chars() {
        if want == ' ' {
            let trimmed = rest.trim_start();
            if trimmed.len() == rest.len() {
                return None;
            }
            rest = trimmed;
        } else {
            let got = rest.chars().next()?;
            if !got.eq_ignore_ascii_case(&want) {
                return None;
            }
            rest = &rest[got.len_utf8()..];
        }
    }
    Some(rest)
}

fn strip_header<'a>(line: &'a str, aliases: &[&str]) -> Option<&'a str> {
    let body = line.trim_start_matches(NORMALIZATION.decoration);
    aliases.iter().find_map(|alias| match_prefix(body, alias))
}

fn is_any_header(line: &str) -> bool {
    let n = &NORMALIZATION;
    [n.location_headers, n.impact_headers, n.impacted_location_headers]
        .iter()
        .any(|aliases| strip_header(line, aliases).is_some())
}

fn last_header<'a>(lines: &[&'a str], aliases: &[&str]) -> Option<HeaderHit<'a>> {
    lines
        .iter()
        .enumerate()
        .rev()
        .find_map(|(i, l)| strip_header(l, aliases).map(|payload| HeaderHit { line: i, payload }))
}

/// The header payload, continuing onto following lines (such as bullet
/// lists) when the header line itself carries nothing.
fn payload(lines: &[&str], hit: &HeaderHit<'_>) -> String {
    let inline = hit.payload.trim_matches(NORMALIZATION.decoration);
    if !inline.is_empty() {
        return String::from(inline);
    }
    let mut parts: Vec<&str> = Vec::new();
    for line in &lines[hit.line + 1..] {
        if line.trim().is_empty() || is_any_header(line) {
            break;
        }
        let item = strip_numbering(line.trim()).trim_matches(NORMALIZATION.decoration);
        if !item.is_empty() {
            parts.push(item);
        }
    }
    parts.join(", ")
}

/// Drops a list marker such as `1.` or `2)` followed by whitespace.
fn strip_numbering(item: &str) -> &str {
    let digits = item.len() - item.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return item;
    }
    let rest = &item[digits..];
    match rest.strip_prefix(['.', ')']) {
        Some(after) if after.starts_with(char::is_whitespace) => after,
        _ => item,
    }
}

fn is_empty_payload(p: &str) -> bool {
    let p = p.trim().trim_end_matches('.').trim();
    p.is_empty() || NORMALIZATION.empty_payloads.iter().any(|e| p.eq_ignore_ascii_case(e))
}

/// Splits on commas that are not inside parentheses.
fn split_entries(payload: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in payload.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(&payload[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&payload[start..]);
    out
}

fn clean_entry(raw: &str) -> String {
    let mut s = raw.trim();
    loop {
        let next = s.trim_matches(NORMALIZATION.quotes).trim_end_matches('.').trim();
        if next == s {
            break;
        }
        s = next;
    }
    collapse_whitespace(s)
}

/// Splits a trailing `(n)` count off a location entry.
fn split_count(entry: &str) -> (&str, Option<u32>) {
    let trimmed = entry.trim_end();
    if let Some(inner) = trimmed.strip_suffix(')') {
        if let Some(open) = inner.rfind('(') {
            if let Ok(n) = inner[open + 1..].trim().parse::<u32>() {
                return (&trimmed[..open], Some(n));
            }
        }
    }
    (trimmed, None)
}

/// Parses an all-locations answer such as
/// `Locations mentioned: Chengannur (2), Madavana (1)`.
///
/// A missing `(n)` suffix counts as 1; an explicit `(0)` drops the entry.
pub fn parse_all_locations(raw: &str) -> Result<LocationPrediction, ParseFailure> {
    let lines: Vec<&str> = raw.lines().collect();
    let hit =
        last_header(&lines, NORMALIZATION.location_headers).ok_or(ParseFailure::MissingHeader(LOCATIONS_HEADER))?;
    let payload = payload(&lines, &hit);
    if is_empty_payload(&payload) {
        return Ok(LocationPrediction::default());
    }
    let entries = split_entries(&payload)
        .into_iter()
        .filter_map(|raw_entry| {
            let (surface, count) = split_count(raw_entry.trim());
            let surface = clean_entry(surface);
            match (surface.is_empty(), count) {
                (true, _) | (_, Some(0)) => None,
                (false, n) => Some(LocationEntry::new(surface, n.unwrap_or(1))),
            }
        })
        .collect();
    Ok(LocationPrediction { entries })
}

fn parse_list(payload: &str) -> Vec<String> {
    if is_empty_payload(payload) {
        return Vec::new();
    }
    split_entries(payload)
        .into_iter()
        .map(clean_entry)
        .filter(|e| !e.is_empty())
        .collect()
}

/// Parses a `Types of Impact:` / `Impacted Location:` answer. Both headers
/// must be present; either payload may be empty.
pub fn parse_impact_response(raw: &str) -> Result<ImpactPrediction, ParseFailure> {
    let lines: Vec<&str> = raw.lines().collect();
    let impacts =
        last_header(&lines, NORMALIZATION.impact_headers).ok_or(ParseFailure::MissingHeader(IMPACTS_HEADER))?;
    let locations = last_header(&lines, NORMALIZATION.impacted_location_headers)
        .ok_or(ParseFailure::MissingHeader(IMPACTED_LOCATIONS_HEADER))?;
    Ok(ImpactPrediction {
        impacts: parse_list(&payload(&lines, &impacts)),
        impacted_locations: parse_list(&payload(&lines, &locations)),
    })
}

/// A parse that never fails: malformed output becomes an empty prediction
/// with `malformed` set, so scoring counts every gold item as missed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub prediction: Prediction,
    pub malformed: bool,
}

pub fn parse_response(raw: &str, task: Task) -> Result<Prediction, ParseFailure> {
    match task {
        Task::AllLocations => parse_all_locations(raw).map(Prediction::AllLocations),
        Task::ImpactAndImpacted => parse_impact_response(raw).map(Prediction::ImpactAndImpacted),
    }
}

pub fn parse_or_empty(raw: &str, task: Task) -> ParsedResponse {
    match parse_response(raw, task) {
        Ok(prediction) => ParsedResponse {
            prediction,
            malformed: false,
        },
        Err(_) => ParsedResponse {
            prediction: Prediction::empty(task),
            malformed: true,
        },
    }
}
