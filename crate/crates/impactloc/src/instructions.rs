//! Instruction-tuning records: one rendered prompt and its gold answer per line.

use impactloc_core::eval::{gold_entities, EvalLayer};
use impactloc_core::parse::parse_impact_response;
use impactloc_core::prompting::{build_prompt, render_impact_answer, PromptError};
use impactloc_core::{Dataset, Family, PromptSpec, Task};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub instruction: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExportError {
    #[error("instruction records need the impact task, got {0}")]
    WrongTask(Task),
    #[error("post {post_id}: {source}")]
    Prompt { post_id: String, source: PromptError },
    #[error(
        "post {post_id}: gold answer does not survive the answer format (surfaces with commas or trailing periods?)"
    )]
    Unrepresentable { post_id: String },
}

/// Persona prompt with all six examples.
pub fn default_spec() -> PromptSpec {
    PromptSpec::new(Task::ImpactAndImpacted, Family::Persona, 6).expect("six shots are allowed")
}

/// One record per post, in dataset order. Posts without gold keep empty
/// payloads. Every response is checked to parse back to the gold lists.
pub fn export_instruction_records(train: &Dataset, spec: &PromptSpec) -> Result<Vec<InstructionRecord>, ExportError> {
    if spec.task != Task::ImpactAndImpacted {
        return Err(ExportError::WrongTask(spec.task));
    }
    train
        .posts()
        .iter()
        .map(|post| {
            let instruction = build_prompt(spec, &post.text).map_err(|source| ExportError::Prompt {
                post_id: post.post_id.clone(),
                source,
            })?;
            let impacts = gold_entities(&post.gold, EvalLayer::Impacts);
            let locations = gold_entities(&post.gold, EvalLayer::ImpactedLocations);
            let response = render_impact_answer(impacts.iter().copied(), locations.iter().copied());
            let back = parse_impact_response(&response).ok();
            let same = back.is_some_and(|b| b.impacts == impacts && b.impacted_locations == locations);
            if !same {
                return Err(ExportError::Unrepresentable {
                    post_id: post.post_id.clone(),
                });
            }
            Ok(InstructionRecord { instruction, response })
        })
        .collect()
}
