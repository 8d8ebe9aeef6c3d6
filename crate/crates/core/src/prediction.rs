//! Structured model predictions for both tasks.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::prompting::Task;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationEntry {
    pub surface: String,
    pub count: u32,
}

impl LocationEntry {
    pub fn new(surface: impl Into<String>, count: u32) -> Self {
        LocationEntry {
            surface: surface.into(),
            count,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationPrediction {
    pub entries: Vec<LocationEntry>,
}

impl LocationPrediction {
    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.surface.as_str())
    }
}

impl<S: Into<String>> FromIterator<(S, u32)> for LocationPrediction {
    fn from_iter<I: IntoIterator<Item = (S, u32)>>(iter: I) -> Self {
        LocationPrediction {
            entries: iter.into_iter().map(|(s, n)| LocationEntry::new(s, n)).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactPrediction {
    pub impacts: Vec<String>,
    pub impacted_locations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Prediction {
    AllLocations(LocationPrediction),
    ImpactAndImpacted(ImpactPrediction),
}

impl Prediction {
    pub fn empty(task: Task) -> Self {
        match task {
            Task::AllLocations => Prediction::AllLocations(LocationPrediction::default()),
            Task::ImpactAndImpacted => Prediction::ImpactAndImpacted(ImpactPrediction::default()),
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Prediction::AllLocations(_) => Task::AllLocations,
            Prediction::ImpactAndImpacted(_) => Task::ImpactAndImpacted,
        }
    }
}
