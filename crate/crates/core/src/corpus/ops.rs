use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Category, Dataset, DisasterType, Post};

fn retain(d: &Dataset, suffix: &str, keep: impl Fn(&Post) -> bool) -> Dataset {
    let posts = d.posts().iter().filter(|p| keep(p)).cloned().collect();
    Dataset::from_valid(format!("{}{}", d.name(), suffix), posts)
}

/// Posts whose category is in `keep`, in original order.
pub fn filter_categories(d: &Dataset, keep: &BTreeSet<Category>) -> Dataset {
    Dataset::from_valid(
        String::from(d.name()),
        d.posts()
            .iter()
            .filter(|p| keep.contains(&p.category))
            .cloned()
            .collect(),
    )
}

pub fn subset_by_disaster_type(d: &Dataset, disaster_type: DisasterType) -> Dataset {
    retain(d, &format!("/{disaster_type}"), |p| p.disaster_type == disaster_type)
}

/// Drops every post of `event_id`. An unknown event leaves the dataset unchanged.
pub fn exclude_event(d: &Dataset, event_id: &str) -> Dataset {
    retain(d, &format!("/ex-{event_id}"), |p| p.event_id != event_id)
}

pub fn select_event(d: &Dataset, event_id: &str) -> Dataset {
    retain(d, &format!("/{event_id}"), |p| p.event_id == event_id)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("fraction {0} is outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("train and test fractions sum to {0}, more than 1")]
    SumExceedsOne(f64),
}

fn round_half_up(x: f64) -> usize {
    // x >= 0, so truncation is floor. The epsilon absorbs representation
    // error such as 0.35 * 10 = 3.4999...
    (x + 0.5 + 1e-9) as usize
}

/// Seeded random train/test split.
///
/// The train size is `round_half_up(train_frac * N)`, the test size is
/// `round_half_up(test_frac * N)` clipped so both fit in `N`; the rest is
/// discarded. Both halves keep the original post order.
pub fn split_random(d: &Dataset, train_frac: f64, test_frac: f64, seed: u64) -> Result<(Dataset, Dataset), SplitError> {
    for frac in [train_frac, test_frac] {
        if !(0.0..=1.0).contains(&frac) {
            return Err(SplitError::FractionOutOfRange(frac));
        }
    }
    if train_frac + test_frac > 1.0 + 1e-12 {
        return Err(SplitError::SumExceedsOne(train_frac + test_frac));
    }
    let n = d.len();
    let n_train = round_half_up(train_frac * n as f64).min(n);
    let n_test = round_half_up(test_frac * n as f64).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..n_train + n_test].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let take = |idx: &[usize]| idx.iter().map(|&i| d.posts()[i].clone()).collect();
    Ok((
        Dataset::from_valid(format!("{}/train", d.name()), take(&train_idx)),
        Dataset::from_valid(format!("{}/test", d.name()), take(&test_idx)),
    ))
}

/// Span counts for one slice of a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    pub posts: usize,
    pub impacts: usize,
    pub impacted_locations: usize,
    pub all_locations: usize,
}

impl LayerCounts {
    fn add_post(&mut self, p: &Post) {
        self.posts += 1;
        self.impacts += p.gold.impacts.len();
        self.impacted_locations += p.gold.impacted_locations.len();
        self.all_locations += p.gold.all_locations.len();
    }

    /// Impacted-location share of all location mentions; `None` when there are no locations.
    pub fn impacted_ratio(&self) -> Option<f64> {
        (self.all_locations > 0).then(|| self.impacted_locations as f64 / self.all_locations as f64)
    }
}

impl core::ops::Add for LayerCounts {
    type Output = LayerCounts;

    fn add(self, o: LayerCounts) -> LayerCounts {
        LayerCounts {
            posts: self.posts + o.posts,
            impacts: self.impacts + o.impacts,
            impacted_locations: self.impacted_locations + o.impacted_locations,
            all_locations: self.all_locations + o.all_locations,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub overall: LayerCounts,
    pub per_event: BTreeMap<String, LayerCounts>,
}

pub fn corpus_stats(d: &Dataset) -> StatsReport {
    let mut report = StatsReport::default();
    for post in d.posts() {
        report.overall.add_post(post);
        report
            .per_event
            .entry(post.event_id.clone())
            .or_default()
            .add_post(post);
    }
    report
}
