//! Entity-level scoring against gold annotations.
//!
//! Each post contributes a [`Tally`] from exact matching of normalized entity
//! sets. Aggregates are micro-averages: tallies are summed before ratios.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::iter::Sum;
use core::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, GoldAnnotation};
use crate::prediction::Prediction;
use crate::prompting::Task;
use crate::text::{nfc, normalize_entity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalLayer {
    AllLocations,
    Impacts,
    ImpactedLocations,
}

impl EvalLayer {
    pub const ALL: [EvalLayer; 3] = [
        EvalLayer::AllLocations,
        EvalLayer::Impacts,
        EvalLayer::ImpactedLocations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalLayer::AllLocations => "all_locations",
            EvalLayer::Impacts => "impacts",
            EvalLayer::ImpactedLocations => "impacted_locations",
        }
    }

    pub fn task(self) -> Task {
        match self {
            EvalLayer::AllLocations => Task::AllLocations,
            EvalLayer::Impacts | EvalLayer::ImpactedLocations => Task::ImpactAndImpacted,
        }
    }

    pub fn for_task(task: Task) -> &'static [EvalLayer] {
        match task {
            Task::AllLocations => &[EvalLayer::AllLocations],
            Task::ImpactAndImpacted => &[EvalLayer::Impacts, EvalLayer::ImpactedLocations],
        }
    }
}

impl core::fmt::Display for EvalLayer {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tally {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Tally {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Tally { tp, fp, fn_ }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }

    pub fn scores(&self) -> Scores {
        Scores {
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl AddAssign for Tally {
    fn add_assign(&mut self, o: Tally) {
        *self = *self + o;
    }
}

impl Sum for Tally {
    fn sum<I: Iterator<Item = Tally>>(iter: I) -> Tally {
        iter.fold(Tally::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Matching switches. Defaults: case-insensitive, deduplicated per post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub case_sensitive: bool,
    /// When off, repeated predictions of one entity are scored as a multiset.
    pub deduplicate: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            case_sensitive: false,
            deduplicate: true,
        }
    }
}

/// Matching key for an entity under `opts`.
pub fn entity_key(s: &str, opts: &EvalOptions) -> String {
    if !opts.case_sensitive {
        return normalize_entity(s);
    }
    // Same rule as normalize_entity without the lowercasing.
    let stripped: String = s.chars().filter(|c| *c != '#' && *c != '@').collect();
    let collapsed = crate::text::collapse_whitespace(&nfc(&stripped));
    nfc(collapsed.trim_matches(|c: char| !crate::text::is_word_char(c)))
}

/// Exact matching of two normalized, deduplicated sets.
pub fn match_sets(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> Tally {
    let tp = pred.intersection(gold).count();
    Tally::new(tp, pred.len() - tp, gold.len() - tp)
}

fn keyed<S: AsRef<str>>(items: &[S], opts: &EvalOptions) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for s in items {
        let key = entity_key(s.as_ref(), opts);
        if key.is_empty() {
            continue;
        }
        let n = out.entry(key).or_insert(0);
        *n = if opts.deduplicate { 1 } else { *n + 1 };
    }
    out
}

/// Normalizes both lists under `opts` and matches them.
pub fn match_lists<P: AsRef<str>, G: AsRef<str>>(pred: &[P], gold: &[G], opts: &EvalOptions) -> Tally {
    let p = keyed(pred, opts);
    let g = keyed(gold, opts);
    let tp: usize = p.iter().map(|(k, n)| (*n).min(g.get(k).copied().unwrap_or(0))).sum();
    let np: usize = p.values().sum();
    let ng: usize = g.values().sum();
    Tally::new(tp, np - tp, ng - tp)
}

/// The entity list a prediction supplies for `layer`, or `None` when the
/// prediction belongs to the other task.
pub fn prediction_entities(pred: &Prediction, layer: EvalLayer) -> Option<Vec<&str>> {
    match (pred, layer) {
        (Prediction::AllLocations(p), EvalLayer::AllLocations) => Some(p.surfaces().collect()),
        (Prediction::ImpactAndImpacted(p), EvalLayer::Impacts) => Some(p.impacts.iter().map(String::as_str).collect()),
        (Prediction::ImpactAndImpacted(p), EvalLayer::ImpactedLocations) => {
            Some(p.impacted_locations.iter().map(String::as_str).collect())
        }
        _ => None,
    }
}

pub fn gold_entities(gold: &GoldAnnotation, layer: EvalLayer) -> Vec<&str> {
    let spans = match layer {
        EvalLayer::AllLocations => &gold.all_locations,
        EvalLayer::Impacts => &gold.impacts,
        EvalLayer::ImpactedLocations => &gold.impacted_locations,
    };
    spans.iter().map(|s| s.surface.as_str()).collect()
}

/// A model's answer for one post, after parsing and optional filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostPrediction {
    pub post_id: String,
    pub prediction: Prediction,
    /// The raw response could not be parsed; scored as an empty prediction.
    #[serde(default)]
    pub malformed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no prediction for posts: {}", .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("predictions for posts not in the dataset: {}", .0.join(", "))]
    UnknownPosts(Vec<String>),
    #[error("more than one prediction for post {0}")]
    DuplicatePrediction(String),
    #[error("prediction for post {post_id} does not cover layer {layer}")]
    LayerMismatch { post_id: String, layer: EvalLayer },
}

/// Scores for one layer over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: EvalLayer,
    pub overall: Tally,
    pub per_event: BTreeMap<String, Tally>,
    pub posts: usize,
    pub malformed: usize,
    /// Mean per-post soft overlap. Diagnostic only.
    pub soft_overlap: f64,
}

impl LayerReport {
    pub fn micro(&self) -> Scores {
        self.overall.scores()
    }

    /// Unweighted mean of per-event scores.
    pub fn macro_scores(&self) -> Scores {
        let n = self.per_event.len();
        if n == 0 {
            return Scores::default();
        }
        let mut acc = Scores::default();
        for t in self.per_event.values() {
            let s = t.scores();
            acc.precision += s.precision;
            acc.recall += s.recall;
            acc.f1 += s.f1;
        }
        let n = n as f64;
        Scores {
            precision: acc.precision / n,
            recall: acc.recall / n,
            f1: acc.f1 / n,
        }
    }
}

/// Scores `preds` against `gold` on one layer. Every post needs exactly one
/// prediction; malformed predictions count every gold item as a miss.
pub fn evaluate(
    preds: &[PostPrediction],
    gold: &Dataset,
    layer: EvalLayer,
    opts: &EvalOptions,
) -> Result<LayerReport, EvalError> {
    let mut by_id: BTreeMap<&str, &PostPrediction> = BTreeMap::new();
    for p in preds {
        if by_id.insert(p.post_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.post_id.clone()));
        }
    }
    let known: BTreeSet<&str> = gold.posts().iter().map(|p| p.post_id.as_str()).collect();
    let unknown: Vec<String> = by_id
        .keys()
        .filter(|id| !known.contains(*id))
        .map(|id| String::from(*id))
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownPosts(unknown));
    }
    let missing: Vec<String> = gold
        .posts()
        .iter()
        .filter(|p| !by_id.contains_key(p.post_id.as_str()))
        .map(|p| p.post_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing));
    }

    let mut report = LayerReport {
        layer,
        overall: Tally::default(),
        per_event: BTreeMap::new(),
        posts: gold.len(),
        malformed: 0,
        soft_overlap: 0.0,
    };
    let mut soft_sum = 0.0;
    for post in gold.posts() {
        let pred = by_id[post.post_id.as_str()];
        let entities = prediction_entities(&pred.prediction, layer).ok_or_else(|| EvalError::LayerMismatch {
            post_id: post.post_id.clone(),
            layer,
        })?;
        let entities = if pred.malformed {
            report.malformed += 1;
            Vec::new()
        } else {
            entities
        };
        let gold_items = gold_entities(&post.gold, layer);
        let tally = match_lists(&entities, &gold_items, opts);
        report.overall += tally;
        *report.per_event.entry(post.event_id.clone()).or_default() += tally;
        soft_sum += soft_overlap_diagnostic(&entities, &gold_items);
    }
    if report.posts > 0 {
        report.soft_overlap = soft_sum / report.posts as f64;
    }
    Ok(report)
}

fn token_jaccard(a: &str, b: &str) -> f64 {
    let ta: BTreeSet<&str> = a.split_whitespace().collect();
    let tb: BTreeSet<&str> = b.split_whitespace().collect();
    ratio(ta.intersection(&tb).count(), ta.union(&tb).count())
}

/// Token-level Jaccard of a greedy one-to-one pairing between normalized
/// predicted and gold entities, divided by the larger set size. Two empty
/// sets score 1.0.
pub fn soft_overlap_diagnostic<P: AsRef<str>, G: AsRef<str>>(pred: &[P], gold: &[G]) -> f64 {
    let p: Vec<String> = dedup_keys(pred);
    let g: Vec<String> = dedup_keys(gold);
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    let mut pairs = Vec::with_capacity(p.len() * g.len());
    for (i, a) in p.iter().enumerate() {
        for (j, b) in g.iter().enumerate() {
            let s = token_jaccard(a, b);
            if s > 0.0 {
                pairs.push((i, j, s));
            }
        }
    }
    pairs.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut used_p = alloc::vec![false; p.len()];
    let mut used_g = alloc::vec![false; g.len()];
    let mut total = 0.0;
    for (i, j, s) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            total += s;
        }
    }
    total / p.len().max(g.len()) as f64
}

fn dedup_keys<S: AsRef<str>>(items: &[S]) -> Vec<String> {
    let set: BTreeSet<String> = items
        .iter()
        .map(|s| normalize_entity(s.as_ref()))
        .filter(|k| !k.is_empty())
        .collect();
    set.into_iter().collect()
}
