//! Token-level Cohen's kappa between two annotators of the same posts.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dataset, Span};
use crate::text::whitespace_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaLayer {
    Impact,
    ImpactedLocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KappaError {
    #[error("post `{0}` is annotated by only one annotator")]
    PostMismatch(String),
    #[error("post `{0}` has different text for the two annotators")]
    TextMismatch(String),
    #[error("no tokens to compare")]
    NoTokens,
    #[error("kappa is undefined: chance agreement is 1 but observed agreement is not")]
    Undefined,
}

/// Binary confusion counts over tokens. `yes_no` means annotator A labeled the
/// token and annotator B did not.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub yes_yes: u64,
    pub yes_no: u64,
    pub no_yes: u64,
    pub no_no: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.yes_yes + self.yes_no + self.no_yes + self.no_no
    }

    fn record(&mut self, a: bool, b: bool) {
        match (a, b) {
            (true, true) => self.yes_yes += 1,
            (true, false) => self.yes_no += 1,
            (false, true) => self.no_yes += 1,
            (false, false) => self.no_no += 1,
        }
    }
}

/// `(p_o - p_e) / (1 - p_e)` from confusion counts.
pub fn kappa_from_confusion(c: &Confusion) -> Result<f64, KappaError> {
    let total = c.total();
    if total == 0 {
        return Err(KappaError::NoTokens);
    }
    let n = total as f64;
    let observed = (c.yes_yes + c.no_no) as f64 / n;
    let a_yes = (c.yes_yes + c.yes_no) as f64 / n;
    let b_yes = (c.yes_yes + c.no_yes) as f64 / n;
    let chance = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
    if chance == 1.0 {
        return if observed == 1.0 {
            Ok(1.0)
        } else {
            Err(KappaError::Undefined)
        };
    }
    Ok((observed - chance) / (1.0 - chance))
}

fn layer(gold: &super::GoldAnnotation, layer: KappaLayer) -> &[Span] {
    match layer {
        KappaLayer::Impact => &gold.impacts,
        KappaLayer::ImpactedLocation => &gold.impacted_locations,
    }
}

fn labels(text: &str, spans: &[Span]) -> Vec<bool> {
    whitespace_tokens(text)
        .into_iter()
        .map(|tok| spans.iter().any(|s| s.start < tok.end && tok.start < s.end))
        .collect()
}

/// Confusion counts for one layer. Each whitespace token of each post is
/// labeled "in" for an annotator when it overlaps any of that annotator's spans.
pub fn confusion(a: &Dataset, b: &Dataset, which: KappaLayer) -> Result<Confusion, KappaError> {
    if let Some(p) = b.posts().iter().find(|p| a.get(&p.post_id).is_none()) {
        return Err(KappaError::PostMismatch(p.post_id.clone()));
    }
    let mut counts = Confusion::default();
    for pa in a.posts() {
        let pb = b
            .get(&pa.post_id)
            .ok_or_else(|| KappaError::PostMismatch(pa.post_id.clone()))?;
        if pa.text != pb.text {
            return Err(KappaError::TextMismatch(pa.post_id.clone()));
        }
        let la = labels(&pa.text, layer(&pa.gold, which));
        let lb = labels(&pb.text, layer(&pb.gold, which));
        for (x, y) in la.into_iter().zip(lb) {
            counts.record(x, y);
        }
    }
    Ok(counts)
}

pub fn cohen_kappa(a: &Dataset, b: &Dataset, which: KappaLayer) -> Result<f64, KappaError> {
    kappa_from_confusion(&confusion(a, b, which)?)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::post;
    use super::super::{Category, DisasterType, Post};
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    /// One post whose i-th token is labeled by `marks[i]`.
    fn annotated(id: &str, marks: &[bool]) -> Post {
        let words: Vec<String> = (0..marks.len()).map(|i| format!("w{i:02}")).collect();
        let text = words.join(" ");
        let mut p = post(id, &text, "ev", DisasterType::Flood, Category::InjuredOrDeadPeople);
        p.gold.impacts = marks
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| Span::new(i * 4, i * 4 + 3, words[i].clone()))
            .collect();
        p
    }

    fn pair(a: &[bool], b: &[bool]) -> (Dataset, Dataset) {
        (
            Dataset::new("a", vec![annotated("x", a)]).unwrap(),
            Dataset::new("b", vec![annotated("x", b)]).unwrap(),
        )
    }

    #[test]
    fn twenty_token_fixture() {
        // yes/yes 6, yes/no 2, no/yes 2, no/no 10
        let mut a = vec![true; 8];
        a.extend([false; 12]);
        let mut b = vec![true; 6];
        b.extend([false, false, true, true]);
        b.extend([false; 10]);
        let (da, db) = pair(&a, &b);
        let c = confusion(&da, &db, KappaLayer::Impact).unwrap();
        assert_eq!(
            c,
            Confusion {
                yes_yes: 6,
                yes_no: 2,
                no_yes: 2,
                no_no: 10
            }
        );
        // p_o = 0.8, p_e = 0.4*0.4 + 0.6*0.6 = 0.52
        let k = cohen_kappa(&da, &db, KappaLayer::Impact).unwrap();
        assert!((k - 0.28 / 0.48).abs() < 1e-12, "{k}");
    }

    #[test]
    fn perfect_agreement_is_exactly_one() {
        let marks = [true, false, false, true, true, false, false];
        let (da, db) = pair(&marks, &marks);
        assert_eq!(cohen_kappa(&da, &db, KappaLayer::Impact), Ok(1.0));
    }

    #[test]
    fn silent_annotator_gives_zero() {
        // a labels 3 of 10, b labels nothing: p_o = 0.7, p_e = 0.7, kappa = 0
        let mut a = vec![true; 3];
        a.extend([false; 7]);
        let (da, db) = pair(&a, &[false; 10]);
        let k = cohen_kappa(&da, &db, KappaLayer::Impact).unwrap();
        assert!(k.abs() < 1e-12, "{k}");
    }

    #[test]
    fn degenerate_chance() {
        let (da, db) = pair(&[false; 5], &[false; 5]);
        assert_eq!(cohen_kappa(&da, &db, KappaLayer::Impact), Ok(1.0));
        let c = Confusion {
            yes_yes: 0,
            yes_no: 0,
            no_yes: 0,
            no_no: 0,
        };
        assert_eq!(kappa_from_confusion(&c), Err(KappaError::NoTokens));
    }

    #[test]
    fn mismatched_posts() {
        let da = Dataset::new("a", vec![annotated("x", &[true])]).unwrap();
        let db = Dataset::new("b", vec![annotated("y", &[true])]).unwrap();
        assert_eq!(
            cohen_kappa(&da, &db, KappaLayer::Impact),
            Err(KappaError::PostMismatch("y".to_string()))
        );
        let db = Dataset::new("b", vec![annotated("x", &[true, false])]).unwrap();
        assert_eq!(
            cohen_kappa(&da, &db, KappaLayer::Impact),
            Err(KappaError::TextMismatch("x".to_string()))
        );
    }

    #[test]
    fn partial_token_overlap_counts_as_in() {
        let mut p = post(
            "x",
            "Mati burned",
            "ev",
            DisasterType::Wildfire,
            Category::InjuredOrDeadPeople,
        );
        p.gold.impacted_locations = vec![Span::new(1, 3, "at")];
        let mut q = p.clone();
        q.gold.impacted_locations = vec![Span::new(0, 4, "Mati")];
        let da = Dataset::new("a", vec![p]).unwrap();
        let db = Dataset::new("b", vec![q]).unwrap();
        assert_eq!(cohen_kappa(&da, &db, KappaLayer::ImpactedLocation), Ok(1.0));
    }
}
