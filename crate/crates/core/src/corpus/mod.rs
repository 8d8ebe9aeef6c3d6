//! Annotated disaster-post corpus: posts, gold spans and dataset operations.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{char_len, char_slice, nfc};

pub mod brat;
mod kappa;
mod ops;

pub use kappa::{cohen_kappa, confusion, kappa_from_confusion, Confusion, KappaError, KappaLayer};
pub use ops::{
    corpus_stats, exclude_event, filter_categories, select_event, split_random, subset_by_disaster_type, LayerCounts,
    SplitError, StatsReport,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("post `{post_id}`: text is empty")]
    EmptyText { post_id: String },
    #[error("post `{post_id}`: {layer} span {start}..{end} out of bounds (text has {len} chars)")]
    SpanOutOfBounds {
        post_id: String,
        layer: &'static str,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("post `{post_id}`: {layer} span {start}..{end} is `{actual}`, annotated as `{surface}`")]
    SurfaceMismatch {
        post_id: String,
        layer: &'static str,
        start: usize,
        end: usize,
        surface: String,
        actual: String,
    },
    #[error("post `{post_id}`: {layer} spans are not sorted by start offset")]
    Unsorted { post_id: String, layer: &'static str },
    #[error("post `{post_id}`: overlapping {layer} spans at {first:?} and {second:?}")]
    Overlap {
        post_id: String,
        layer: &'static str,
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("post `{post_id}`: impacted location {start}..{end} is missing from all_locations")]
    ImpactedNotInAll { post_id: String, start: usize, end: usize },
    #[error("dataset `{dataset}`: duplicate post_id `{post_id}`")]
    DuplicatePostId { dataset: String, post_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisasterType {
    Earthquake,
    Wildfire,
    Hurricane,
    Flood,
    Cyclone,
    Other,
}

impl DisasterType {
    pub const ALL: [DisasterType; 6] = [
        DisasterType::Earthquake,
        DisasterType::Wildfire,
        DisasterType::Hurricane,
        DisasterType::Flood,
        DisasterType::Cyclone,
        DisasterType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DisasterType::Earthquake => "earthquake",
            DisasterType::Wildfire => "wildfire",
            DisasterType::Hurricane => "hurricane",
            DisasterType::Flood => "flood",
            DisasterType::Cyclone => "cyclone",
            DisasterType::Other => "other",
        }
    }
}

impl fmt::Display for DisasterType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} `{value}`")]
pub struct UnknownVariant {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for DisasterType {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DisasterType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownVariant {
                kind: "disaster type",
                value: s.to_string(),
            })
    }
}

/// The three humanitarian categories kept in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    InjuredOrDeadPeople,
    InfrastructureAndUtilityDamage,
    MissingOrFoundPeople,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::InjuredOrDeadPeople,
        Category::InfrastructureAndUtilityDamage,
        Category::MissingOrFoundPeople,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::InjuredOrDeadPeople => "injured_or_dead_people",
            Category::InfrastructureAndUtilityDamage => "infrastructure_and_utility_damage",
            Category::MissingOrFoundPeople => "missing_or_found_people",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownVariant {
                kind: "category",
                value: s.to_string(),
            })
    }
}

/// A character-offset span `[start, end)` over a post's text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl Span {
    pub fn new(start: usize, end: usize, surface: impl Into<String>) -> Self {
        Span {
            start,
            end,
            surface: surface.into(),
        }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub all_locations: Vec<Span>,
    pub impacted_locations: Vec<Span>,
    pub impacts: Vec<Span>,
}

impl GoldAnnotation {
    pub fn is_empty(&self) -> bool {
        self.all_locations.is_empty() && self.impacted_locations.is_empty() && self.impacts.is_empty()
    }

    /// Sorts every layer by `(start, end)` and drops exact duplicates.
    pub fn canonicalize(&mut self) {
        for layer in [&mut self.all_locations, &mut self.impacted_locations, &mut self.impacts] {
            layer.sort();
            layer.dedup();
        }
    }

    fn layers(&self) -> [(&'static str, &[Span]); 3] {
        [
            ("all_locations", &self.all_locations),
            ("impacted_locations", &self.impacted_locations),
            ("impacts", &self.impacts),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub text: String,
    pub event_id: String,
    pub disaster_type: DisasterType,
    pub country: String,
    pub category: Category,
    pub gold: GoldAnnotation,
}

impl Post {
    /// Checks every span and layer invariant against the post text.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.text.trim().is_empty() {
            return Err(CorpusError::EmptyText {
                post_id: self.post_id.clone(),
            });
        }
        let len = char_len(&self.text);
        for (layer, spans) in self.gold.layers() {
            for span in spans {
                if span.start >= span.end || span.end > len {
                    return Err(CorpusError::SpanOutOfBounds {
                        post_id: self.post_id.clone(),
                        layer,
                        start: span.start,
                        end: span.end,
                        len,
                    });
                }
                let actual = char_slice(&self.text, span.start, span.end).unwrap_or_default();
                if actual != span.surface {
                    return Err(CorpusError::SurfaceMismatch {
                        post_id: self.post_id.clone(),
                        layer,
                        start: span.start,
                        end: span.end,
                        surface: span.surface.clone(),
                        actual: actual.to_string(),
                    });
                }
            }
            for pair in spans.windows(2) {
                if pair[0].start > pair[1].start {
                    return Err(CorpusError::Unsorted {
                        post_id: self.post_id.clone(),
                        layer,
                    });
                }
                if pair[0].overlaps(&pair[1]) {
                    return Err(CorpusError::Overlap {
                        post_id: self.post_id.clone(),
                        layer,
                        first: (pair[0].start, pair[0].end),
                        second: (pair[1].start, pair[1].end),
                    });
                }
            }
        }
        if !self.gold.all_locations.is_empty() {
            for span in &self.gold.impacted_locations {
                let present = self
                    .gold
                    .all_locations
                    .iter()
                    .any(|a| a.start == span.start && a.end == span.end);
                if !present {
                    return Err(CorpusError::ImpactedNotInAll {
                        post_id: self.post_id.clone(),
                        start: span.start,
                        end: span.end,
                    });
                }
            }
        }
        Ok(())
    }

    /// NFC-normalizes the text and every span, remapping offsets to the
    /// normalized text. Already-normalized posts are returned unchanged.
    pub fn into_nfc(mut self) -> Post {
        let normalized = nfc(&self.text);
        if normalized == self.text {
            return self;
        }
        let remap = |offset: usize, text: &str| -> usize {
            let prefix = char_slice(text, 0, offset).unwrap_or(text);
            char_len(&nfc(prefix))
        };
        let original = core::mem::take(&mut self.text);
        for layer in [
            &mut self.gold.all_locations,
            &mut self.gold.impacted_locations,
            &mut self.gold.impacts,
        ] {
            for span in layer.iter_mut() {
                span.start = remap(span.start, &original);
                span.end = remap(span.end, &original);
                span.surface = nfc(&span.surface);
            }
        }
        self.text = normalized;
        self
    }
}

/// An ordered, id-unique collection of posts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    posts: Vec<Post>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate ids and invalid posts.
    pub fn new(name: impl Into<String>, posts: Vec<Post>) -> Result<Self, CorpusError> {
        let name = name.into();
        let mut seen = BTreeSet::new();
        for post in &posts {
            if !seen.insert(post.post_id.as_str()) {
                return Err(CorpusError::DuplicatePostId {
                    dataset: name,
                    post_id: post.post_id.clone(),
                });
            }
            post.validate()?;
        }
        Ok(Dataset { name, posts })
    }

    /// Builds a dataset from posts taken from an already-valid dataset.
    pub(crate) fn from_valid(name: String, posts: Vec<Post>) -> Self {
        Dataset { name, posts }
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Dataset {
            name: name.into(),
            posts: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn into_posts(self) -> Vec<Post> {
        self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn get(&self, post_id: &str) -> Option<&Post> {
        self.posts.iter().find(|p| p.post_id == post_id)
    }

    pub fn post_ids(&self) -> impl Iterator<Item = &str> {
        self.posts.iter().map(|p| p.post_id.as_str())
    }

    pub fn has_event(&self, event_id: &str) -> bool {
        self.posts.iter().any(|p| p.event_id == event_id)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::format;
    use alloc::vec;

    pub fn post(id: &str, text: &str, event: &str, kind: DisasterType, category: Category) -> Post {
        Post {
            post_id: id.to_string(),
            text: text.to_string(),
            event_id: event.to_string(),
            disaster_type: kind,
            country: String::new(),
            category,
            gold: GoldAnnotation::default(),
        }
    }

    /// Ten posts: four infrastructure, three injured/dead, three missing/found.
    pub fn mixed_ten() -> Dataset {
        use Category::*;
        use DisasterType::*;
        let spec = [
            ("kaikoura_2016", Earthquake, InfrastructureAndUtilityDamage),
            ("kaikoura_2016", Earthquake, InjuredOrDeadPeople),
            ("harvey_2017", Hurricane, InfrastructureAndUtilityDamage),
            ("harvey_2017", Hurricane, MissingOrFoundPeople),
            ("greece_2018", Wildfire, InjuredOrDeadPeople),
            ("greece_2018", Wildfire, InfrastructureAndUtilityDamage),
            ("greece_2018", Wildfire, MissingOrFoundPeople),
            ("pakistan_2019", Earthquake, InjuredOrDeadPeople),
            ("pakistan_2019", Earthquake, InfrastructureAndUtilityDamage),
            ("kerala_2018", Flood, MissingOrFoundPeople),
        ];
        let posts = spec
            .iter()
            .enumerate()
            .map(|(i, (event, kind, cat))| {
                let mut p = post(&format!("p{i}"), "Roads damaged in Mati", event, *kind, *cat);
                p.gold.impacts = vec![Span::new(6, 13, "damaged")];
                p.gold.all_locations = vec![Span::new(17, 21, "Mati")];
                if i % 2 == 0 {
                    p.gold.impacted_locations = vec![Span::new(17, 21, "Mati")];
                }
                p
            })
            .collect();
        Dataset::new("mixed", posts).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use alloc::vec;

    fn sample() -> Post {
        let mut p = post(
            "1",
            "Fire ripped through #Mati, 80 dead",
            "greece",
            DisasterType::Wildfire,
            Category::InjuredOrDeadPeople,
        );
        p.gold.all_locations = vec![Span::new(21, 25, "Mati")];
        p.gold.impacted_locations = vec![Span::new(21, 25, "Mati")];
        p.gold.impacts = vec![Span::new(30, 34, "dead")];
        p
    }

    #[test]
    fn valid_post_passes() {
        sample().validate().unwrap();
    }

    #[test]
    fn span_checks() {
        let mut p = sample();
        p.gold.impacts = vec![Span::new(30, 40, "dead")];
        assert!(matches!(p.validate(), Err(CorpusError::SpanOutOfBounds { .. })));

        let mut p = sample();
        p.gold.impacts = vec![Span::new(29, 33, "dead")];
        assert!(matches!(p.validate(), Err(CorpusError::SurfaceMismatch { .. })));

        let mut p = sample();
        p.gold.impacts = vec![Span::new(0, 4, "Fire"), Span::new(2, 6, "re r")];
        assert!(matches!(p.validate(), Err(CorpusError::Overlap { .. })));

        let mut p = sample();
        p.gold.impacts = vec![Span::new(30, 34, "dead"), Span::new(0, 4, "Fire")];
        assert!(matches!(p.validate(), Err(CorpusError::Unsorted { .. })));

        let mut p = sample();
        p.gold.all_locations = vec![Span::new(0, 4, "Fire")];
        assert!(matches!(p.validate(), Err(CorpusError::ImpactedNotInAll { .. })));

        let mut p = sample();
        p.text = " \n".into();
        p.gold = GoldAnnotation::default();
        assert!(matches!(p.validate(), Err(CorpusError::EmptyText { .. })));
    }

    #[test]
    fn impacted_without_all_layer_is_allowed() {
        let mut p = sample();
        p.gold.all_locations.clear();
        p.validate().unwrap();
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Dataset::new("d", vec![sample(), sample()]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicatePostId { .. }));
    }

    #[test]
    fn nfc_remaps_offsets() {
        let mut p = post(
            "n",
            "Kaiko\u{0304}ura roads broken",
            "kaikoura",
            DisasterType::Earthquake,
            Category::InfrastructureAndUtilityDamage,
        );
        p.gold.impacts = vec![Span::new(16, 22, "broken")];
        p.gold.all_locations = vec![Span::new(0, 9, "Kaiko\u{0304}ura")];
        p.validate().unwrap();
        let n = p.into_nfc();
        assert_eq!(n.text, "Kaik\u{014d}ura roads broken");
        assert_eq!(n.gold.impacts, vec![Span::new(15, 21, "broken")]);
        assert_eq!(n.gold.all_locations, vec![Span::new(0, 8, "Kaik\u{014d}ura")]);
        n.validate().unwrap();
    }

    #[test]
    fn enums_parse() {
        assert_eq!("Wildfire".parse::<DisasterType>().unwrap(), DisasterType::Wildfire);
        assert!("tsunami".parse::<DisasterType>().is_err());
        assert_eq!(
            "missing_or_found_people".parse::<Category>().unwrap(),
            Category::MissingOrFoundPeople
        );
    }
}
