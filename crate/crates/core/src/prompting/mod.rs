//! Prompt rendering for both extraction tasks.
//!
//! Instruction texts, output-format lines and the six worked examples per task
//! live as plain-text files under `resources/` and are compiled in. The
//! assembled prompt is
//!
//! ```text
//! <instruction>
//!
//! Examples:
//!
//! Tweet: <E1 tweet>
//! <E1 answer>
//!
//! ...
//!
//! Tweet: <post text>
//!
//! Output format:
//! <format lines>
//! ```
//!
//! with the examples block omitted at zero shots.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::UnknownVariant;

mod bank;

pub use bank::{Example, ExampleBank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Every place name with its occurrence count.
    AllLocations,
    /// Impact words and the locations they affect.
    ImpactAndImpacted,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::AllLocations => "all_locations",
            Task::ImpactAndImpacted => "impact_and_impacted",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all_locations" | "all-locations" | "locations" => Ok(Task::AllLocations),
            "impact_and_impacted" | "impact-and-impacted" | "impact" => Ok(Task::ImpactAndImpacted),
            _ => Err(UnknownVariant {
                kind: "task",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Basic,
    Persona,
    /// Chain-of-thought: the basic instruction with a step-by-step cue.
    Cot,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Basic, Family::Persona, Family::Cot];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Basic => "basic",
            Family::Persona => "persona",
            Family::Cot => "cot",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "basic" => Ok(Family::Basic),
            "persona" => Ok(Family::Persona),
            "cot" | "chain-of-thought" | "chain_of_thought" => Ok(Family::Cot),
            _ => Err(UnknownVariant {
                kind: "prompt family",
                value: s.to_string(),
            }),
        }
    }
}

pub const ALLOWED_SHOTS: [usize; 3] = [0, 1, 6];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("shot count {0} is not one of 0, 1, 6")]
    UnsupportedShots(usize),
    #[error("{shots}-shot prompt lists {ids} example ids")]
    ExampleCountMismatch { shots: usize, ids: usize },
    #[error("example E{0} is not in the bank")]
    UnknownExample(usize),
    #[error("post text is empty")]
    EmptyPost,
}

/// Task, prompt family and shot count, plus which bank examples fill the shots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub task: Task,
    pub family: Family,
    pub shots: usize,
    /// 1-based bank keys (`1` is E1).
    pub example_ids: Vec<usize>,
}

impl PromptSpec {
    /// Uses the first `shots` bank examples in printed order.
    pub fn new(task: Task, family: Family, shots: usize) -> Result<Self, PromptError> {
        Self::with_examples(task, family, shots, (1..=shots).collect())
    }

    pub fn with_examples(
        task: Task,
        family: Family,
        shots: usize,
        example_ids: Vec<usize>,
    ) -> Result<Self, PromptError> {
        let spec = PromptSpec {
            task,
            family,
            shots,
            example_ids,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if !ALLOWED_SHOTS.contains(&self.shots) {
            return Err(PromptError::UnsupportedShots(self.shots));
        }
        if self.example_ids.len() != self.shots {
            return Err(PromptError::ExampleCountMismatch {
                shots: self.shots,
                ids: self.example_ids.len(),
            });
        }
        if let Some(&bad) = self
            .example_ids
            .iter()
            .find(|&&id| !(1..=bank::BANK_SIZE).contains(&id))
        {
            return Err(PromptError::UnknownExample(bad));
        }
        Ok(())
    }

    /// Short label such as `persona-6`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.family, self.shots)
    }
}

pub(crate) mod resources {
    pub const LOC_BASIC: &str = include_str!("../../resources/all_locations/basic.txt");
    pub const LOC_PERSONA: &str = include_str!("../../resources/all_locations/persona.txt");
    pub const LOC_COT_SUFFIX: &str = include_str!("../../resources/all_locations/cot_suffix.txt");
    pub const LOC_FORMAT: &str = include_str!("../../resources/all_locations/output_format.txt");
    pub const LOC_EXAMPLES: &str = include_str!("../../resources/all_locations/examples.txt");
    pub const IMPACT_BASIC: &str = include_str!("../../resources/impact/basic.txt");
    pub const IMPACT_PERSONA: &str = include_str!("../../resources/impact/persona.txt");
    pub const IMPACT_COT_PREFIX: &str = include_str!("../../resources/impact/cot_prefix.txt");
    pub const IMPACT_FORMAT: &str = include_str!("../../resources/impact/output_format.txt");
    pub const IMPACT_EXAMPLES: &str = include_str!("../../resources/impact/examples.txt");
}

/// Every compiled-in template resource as `(relative path, contents)`, for checksumming.
pub fn template_resources() -> [(&'static str, &'static str); 10] {
    use resources::*;
    [
        ("all_locations/basic.txt", LOC_BASIC),
        ("all_locations/persona.txt", LOC_PERSONA),
        ("all_locations/cot_suffix.txt", LOC_COT_SUFFIX),
        ("all_locations/output_format.txt", LOC_FORMAT),
        ("all_locations/examples.txt", LOC_EXAMPLES),
        ("impact/basic.txt", IMPACT_BASIC),
        ("impact/persona.txt", IMPACT_PERSONA),
        ("impact/cot_prefix.txt", IMPACT_COT_PREFIX),
        ("impact/output_format.txt", IMPACT_FORMAT),
        ("impact/examples.txt", IMPACT_EXAMPLES),
    ]
}

const EXAMPLES_HEADING: &str = "Examples:";
const TWEET_LABEL: &str = "Tweet: ";
const FORMAT_HEADING: &str = "Output format:";

/// The instruction paragraph for a task and family.
pub fn instruction(task: Task, family: Family) -> String {
    use resources::*;
    match (task, family) {
        (Task::AllLocations, Family::Basic) => LOC_BASIC.trim_end().to_string(),
        (Task::AllLocations, Family::Persona) => LOC_PERSONA.trim_end().to_string(),
        (Task::AllLocations, Family::Cot) => {
            format!("{} {}", LOC_BASIC.trim_end(), LOC_COT_SUFFIX.trim_end())
        }
        (Task::ImpactAndImpacted, Family::Basic) => IMPACT_BASIC.trim_end().to_string(),
        (Task::ImpactAndImpacted, Family::Persona) => IMPACT_PERSONA.trim_end().to_string(),
        (Task::ImpactAndImpacted, Family::Cot) => {
            format!("{} {}", IMPACT_COT_PREFIX.trim_end(), IMPACT_BASIC.trim_end())
        }
    }
}

pub fn output_format(task: Task) -> &'static str {
    match task {
        Task::AllLocations => resources::LOC_FORMAT.trim_end(),
        Task::ImpactAndImpacted => resources::IMPACT_FORMAT.trim_end(),
    }
}

/// Renders the full prompt for one post.
pub fn build_prompt(spec: &PromptSpec, post_text: &str) -> Result<String, PromptError> {
    spec.validate()?;
    if post_text.trim().is_empty() {
        return Err(PromptError::EmptyPost);
    }
    let bank = ExampleBank::builtin(spec.task);
    let mut out = instruction(spec.task, spec.family);
    if spec.shots > 0 {
        out.push_str("\n\n");
        out.push_str(EXAMPLES_HEADING);
        for &id in &spec.example_ids {
            let ex = bank.get(id).ok_or(PromptError::UnknownExample(id))?;
            out.push_str("\n\n");
            out.push_str(TWEET_LABEL);
            out.push_str(ex.tweet);
            out.push('\n');
            out.push_str(ex.answer);
        }
    }
    out.push_str("\n\n");
    out.push_str(TWEET_LABEL);
    out.push_str(post_text);
    out.push_str("\n\n");
    out.push_str(FORMAT_HEADING);
    out.push('\n');
    out.push_str(output_format(spec.task));
    Ok(out)
}

/// The header lines a response must carry, as the parser anchors on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHeader {
    Locations(&'static str),
    Impact {
        impacts: &'static str,
        impacted_locations: &'static str,
    },
}

pub const LOCATIONS_HEADER: &str = "Locations mentioned:";
pub const IMPACTS_HEADER: &str = "Types of Impact:";
pub const IMPACTED_LOCATIONS_HEADER: &str = "Impacted Location:";

pub fn expected_output_header(task: Task) -> OutputHeader {
    match task {
        Task::AllLocations => OutputHeader::Locations(LOCATIONS_HEADER),
        Task::ImpactAndImpacted => OutputHeader::Impact {
            impacts: IMPACTS_HEADER,
            impacted_locations: IMPACTED_LOCATIONS_HEADER,
        },
    }
}

/// Formats an all-locations answer: `Locations mentioned: A (2), B (1)`.
pub fn render_locations_answer<'a>(entries: impl IntoIterator<Item = (&'a str, u32)>) -> String {
    let body: Vec<String> = entries.into_iter().map(|(s, n)| format!("{s} ({n})")).collect();
    join_after(LOCATIONS_HEADER, &body)
}

/// Formats an impact answer as two header lines with comma-separated payloads.
pub fn render_impact_answer<'a>(
    impacts: impl IntoIterator<Item = &'a str>,
    impacted_locations: impl IntoIterator<Item = &'a str>,
) -> String {
    let impacts: Vec<String> = impacts.into_iter().map(String::from).collect();
    let locations: Vec<String> = impacted_locations.into_iter().map(String::from).collect();
    format!(
        "{}\n{}",
        join_after(IMPACTS_HEADER, &impacts),
        join_after(IMPACTED_LOCATIONS_HEADER, &locations)
    )
}

fn join_after(header: &str, items: &[String]) -> String {
    if items.is_empty() {
        header.to_string()
    } else {
        format!("{header} {}", items.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const POST: &str = "Roads closed near Mati after the fire";

    #[test]
    fn zero_shot_openings() {
        let p = build_prompt(&PromptSpec::new(Task::AllLocations, Family::Persona, 0).unwrap(), POST).unwrap();
        assert!(p.starts_with("Act as an NER that recognizes all locations worldwide."));
        let p = build_prompt(
            &PromptSpec::new(Task::ImpactAndImpacted, Family::Basic, 0).unwrap(),
            POST,
        )
        .unwrap();
        assert!(p.starts_with("Analyse the given tweet to identify the types of disaster-related impact words"));
        let p = build_prompt(&PromptSpec::new(Task::ImpactAndImpacted, Family::Cot, 0).unwrap(), POST).unwrap();
        assert!(p.starts_with("Think step by step: Analyse the given tweet"));
        let p = build_prompt(&PromptSpec::new(Task::AllLocations, Family::Cot, 0).unwrap(), POST).unwrap();
        assert!(p.starts_with("Accurately identify all the place names"));
        assert!(p.contains("as place names. Think step-by-step and then provide only the final formatted answer.\n\n"));
    }

    #[test]
    fn zero_shot_layout() {
        let p = build_prompt(&PromptSpec::new(Task::AllLocations, Family::Basic, 0).unwrap(), POST).unwrap();
        let expected = format!(
            "{}\n\nTweet: {POST}\n\nOutput format:\nLocations mentioned: Location 1 (number of occurrences), Location 2 (number of occurrences), ...",
            resources::LOC_BASIC
        );
        assert_eq!(p, expected);
        assert!(!p.contains("Examples:"));
    }

    #[test]
    fn one_shot_uses_first_example() {
        let p = build_prompt(&PromptSpec::new(Task::AllLocations, Family::Basic, 1).unwrap(), POST).unwrap();
        assert!(p.contains(
            "Examples:\n\nTweet: #keralafloods #chengannur My parents are still stranded in Madavana, Pandanad, Chengannur. No food or water has reached theme yet. Please help.\nLocations mentioned: Chengannur (2), Madavana (1), Pandanad (1)\n\nTweet: Roads"
        ));
    }

    fn examples_section(p: &str) -> &str {
        let start = p.find("Examples:").unwrap();
        let end = p.rfind("\n\nTweet: ").unwrap();
        &p[start..end]
    }

    #[test]
    fn shot_sections_nest() {
        for task in [Task::AllLocations, Task::ImpactAndImpacted] {
            for family in Family::ALL {
                let one = build_prompt(&PromptSpec::new(task, family, 1).unwrap(), POST).unwrap();
                let six = build_prompt(&PromptSpec::new(task, family, 6).unwrap(), POST).unwrap();
                assert!(examples_section(&six).starts_with(examples_section(&one)));
                assert_eq!(six.matches("\nTweet: ").count(), 7);
            }
        }
    }

    #[test]
    fn shot_validation() {
        assert_eq!(
            PromptSpec::new(Task::AllLocations, Family::Basic, 3),
            Err(PromptError::UnsupportedShots(3))
        );
        assert_eq!(
            PromptSpec::with_examples(Task::AllLocations, Family::Basic, 1, vec![1, 2]),
            Err(PromptError::ExampleCountMismatch { shots: 1, ids: 2 })
        );
        assert_eq!(
            PromptSpec::with_examples(Task::AllLocations, Family::Basic, 1, vec![7]),
            Err(PromptError::UnknownExample(7))
        );
        let spec = PromptSpec::with_examples(Task::ImpactAndImpacted, Family::Basic, 1, vec![4]).unwrap();
        let p = build_prompt(&spec, POST).unwrap();
        assert!(p.contains("Amatrice"));
        let bad = PromptSpec {
            task: Task::AllLocations,
            family: Family::Basic,
            shots: 2,
            example_ids: vec![1, 2],
        };
        assert_eq!(build_prompt(&bad, POST), Err(PromptError::UnsupportedShots(2)));
        let ok = PromptSpec::new(Task::AllLocations, Family::Basic, 0).unwrap();
        assert_eq!(build_prompt(&ok, "  "), Err(PromptError::EmptyPost));
    }

    #[test]
    fn deterministic() {
        let spec = PromptSpec::new(Task::ImpactAndImpacted, Family::Persona, 6).unwrap();
        assert_eq!(build_prompt(&spec, POST), build_prompt(&spec, POST));
    }

    #[test]
    fn headers() {
        assert_eq!(
            expected_output_header(Task::AllLocations),
            OutputHeader::Locations("Locations mentioned:")
        );
        assert_eq!(
            expected_output_header(Task::ImpactAndImpacted),
            OutputHeader::Impact {
                impacts: "Types of Impact:",
                impacted_locations: "Impacted Location:"
            }
        );
    }

    #[test]
    fn answers_render_like_the_bank() {
        let bank = ExampleBank::builtin(Task::ImpactAndImpacted);
        assert_eq!(render_impact_answer(["dead"], ["Mati"]), bank.get(2).unwrap().answer);
        let bank = ExampleBank::builtin(Task::AllLocations);
        assert_eq!(
            render_locations_answer([("Kashmir", 2), ("Mirpur", 1), ("Pakistan", 1)]),
            bank.get(3).unwrap().answer
        );
        assert_eq!(render_impact_answer([], []), "Types of Impact:\nImpacted Location:");
    }

    #[test]
    fn parse_names() {
        assert_eq!("impact".parse::<Task>().unwrap(), Task::ImpactAndImpacted);
        assert_eq!("COT".parse::<Family>().unwrap(), Family::Cot);
        assert!("fancy".parse::<Family>().is_err());
    }
}
