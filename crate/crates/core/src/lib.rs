//! Core of the disaster impact and impacted-location extraction pipeline.
//!
//! Everything here is pure and allocation-only: the corpus model and its
//! operations, prompt construction, response parsing, the grounding filter
//! and scoring. File formats, inference and the experiment runner live in
//! the `impactloc` crate.

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod eval;
pub mod grounding;
pub mod parse;
pub mod prediction;
pub mod prompting;
pub mod text;

pub use corpus::{Category, Dataset, DisasterType, GoldAnnotation, Post, Span};
pub use eval::{evaluate, EvalLayer, EvalOptions, LayerReport, PostPrediction, Scores, Tally};
pub use grounding::{filter_all_locations, filter_impact_extraction, MatchPolicy};
pub use parse::{parse_all_locations, parse_impact_response, parse_or_empty, ParseFailure};
pub use prediction::{ImpactPrediction, LocationEntry, LocationPrediction, Prediction};
pub use prompting::{build_prompt, Family, PromptSpec, Task};
