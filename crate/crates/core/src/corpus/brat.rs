//! BRAT standoff annotation parsing.
//!
//! Only text-bound entity lines (`T<k>\t<Kind> <start> <end>\t<surface>`) are
//! read. Relation, event, attribute and note lines are skipped.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use super::{GoldAnnotation, Span};
use crate::text::{char_len, char_slice};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BratError {
    #[error("line {line}: malformed entity line: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: offsets {start}..{end} out of bounds (document has {len} chars)")]
    OutOfBounds {
        line: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("line {line}: span {start}..{end} reads `{actual}`, annotation says `{surface}`")]
    SurfaceMismatch {
        line: usize,
        start: usize,
        end: usize,
        surface: String,
        actual: String,
    },
}

/// A recoverable problem that did not stop parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BratWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Location,
    ImpactedLocation,
    Impact,
}

fn kind(label: &str) -> Option<Kind> {
    match label {
        "Location" => Some(Kind::Location),
        "ImpactedLocation" => Some(Kind::ImpactedLocation),
        "Impact" => Some(Kind::Impact),
        _ => None,
    }
}

/// Parses the `.ann` content for one document.
///
/// Every `ImpactedLocation` span is also recorded in `all_locations`, since an
/// impacted location is a location mention. Line numbers are 1-based.
pub fn parse_annotations(document: &str, ann: &str) -> Result<(GoldAnnotation, Vec<BratWarning>), BratError> {
    let len = char_len(document);
    let mut gold = GoldAnnotation::default();
    let mut warnings = Vec::new();

    for (idx, raw) in ann.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || !raw.starts_with('T') {
            continue;
        }
        let malformed = |reason: &str| BratError::Malformed {
            line,
            reason: reason.to_string(),
        };
        let mut fields = raw.splitn(3, '\t');
        let _id = fields
            .next()
            .filter(|id| id.len() > 1)
            .ok_or_else(|| malformed("missing id"))?;
        let header = fields.next().ok_or_else(|| malformed("missing type and offsets"))?;
        let surface = fields.next().ok_or_else(|| malformed("missing surface text"))?;

        let mut parts = header.split(' ');
        let label = parts.next().unwrap_or_default();
        let offsets: Vec<&str> = parts.collect();
        if offsets.len() != 2 || offsets[1].contains(';') {
            return Err(malformed("expected exactly one `<start> <end>` pair"));
        }
        let start: usize = offsets[0]
            .parse()
            .map_err(|_| malformed("start offset is not an integer"))?;
        let end: usize = offsets[1]
            .parse()
            .map_err(|_| malformed("end offset is not an integer"))?;
        if start >= end || end > len {
            return Err(BratError::OutOfBounds { line, start, end, len });
        }
        let actual = char_slice(document, start, end).unwrap_or_default();
        if actual != surface {
            return Err(BratError::SurfaceMismatch {
                line,
                start,
                end,
                surface: surface.to_string(),
                actual: actual.to_string(),
            });
        }

        let span = Span::new(start, end, surface);
        match kind(label) {
            Some(Kind::Location) => gold.all_locations.push(span),
            Some(Kind::ImpactedLocation) => {
                gold.all_locations.push(span.clone());
                gold.impacted_locations.push(span);
            }
            Some(Kind::Impact) => gold.impacts.push(span),
            None => warnings.push(BratWarning {
                line,
                message: alloc::format!("unknown annotation kind `{label}`, span ignored"),
            }),
        }
    }

    gold.canonicalize();
    Ok((gold, warnings))
}
