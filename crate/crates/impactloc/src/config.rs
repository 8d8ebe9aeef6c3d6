//! Declarative experiment configuration (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use impactloc_core::corpus::DisasterType;
use impactloc_core::prompting::PromptError;
use impactloc_core::{EvalOptions, Family, MatchPolicy, PromptSpec, Task};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{ConfigError, InferenceConfig};

/// Which filter settings each prompt cell is scored under.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    On,
    Off,
    #[default]
    Both,
}

impl FilterMode {
    /// Filter settings in report order: unfiltered first.
    pub fn settings(self) -> &'static [bool] {
        match self {
            FilterMode::On => &[true],
            FilterMode::Off => &[false],
            FilterMode::Both => &[false, true],
        }
    }
}

/// One prompt family and the shot counts to run it with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptGrid {
    pub family: Family,
    pub shots: Vec<usize>,
}

/// How the evaluation set (and the reported training set) is derived.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitDirective {
    /// Evaluate on the whole dataset.
    #[default]
    None,
    /// Seeded random split; evaluate on the test part.
    Random { train_frac: f64, test_frac: f64 },
    /// Train on every other event, evaluate on `event`.
    EventHoldout { event: String },
    /// Restrict to one disaster type. With `holdout_event`, that event is
    /// the evaluation set and the rest of the type is the training set.
    DisasterType {
        disaster_type: DisasterType,
        #[serde(default)]
        holdout_event: Option<String>,
    },
}

/// Labels for the human-readable report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportLabels {
    /// Defaults to the inference model id.
    pub model: Option<String>,
    /// Defaults to "none".
    pub finetuning: Option<String>,
    /// Defaults to "All".
    pub disaster: Option<String>,
    /// Defaults to the dataset file stem.
    pub dataset: Option<String>,
    /// Show macro (per-event mean) scores instead of micro scores.
    pub macro_average: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Canonical corpus file, or a BRAT directory.
    pub dataset: PathBuf,
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub filter: FilterMode,
    pub prompts: Vec<PromptGrid>,
    #[serde(default)]
    pub split: SplitDirective,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub policy: MatchPolicy,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default)]
    pub report: ReportLabels,
    /// Defaults to `<out>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Serve responses only from the cache.
    #[serde(default)]
    pub offline: bool,
    /// Score failed requests as malformed instead of stopping the run.
    #[serde(default)]
    pub allow_failures: bool,
}

#[derive(Debug, Error)]
pub enum ExperimentConfigError {
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("prompt grid is empty")]
    EmptyGrid,
    #[error("prompt grid: {0}")]
    Prompt(#[from] PromptError),
    #[error("prompt cell {0} appears twice")]
    DuplicateCell(String),
    #[error("inference: {0}")]
    Inference(#[from] ConfigError),
    #[error("split fractions must be in [0, 1] and sum to at most 1")]
    Fractions,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ExperimentConfigError> {
        toml::from_str(text).map_err(|e| ExperimentConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(e),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    /// Prompt cells in grid order.
    pub fn cells(&self) -> Result<Vec<PromptSpec>, ExperimentConfigError> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for grid in &self.prompts {
            for &shots in &grid.shots {
                let spec = PromptSpec::new(self.task, grid.family, shots)?;
                if !seen.insert(spec.label()) {
                    return Err(ExperimentConfigError::DuplicateCell(spec.label()));
                }
                out.push(spec);
            }
        }
        if out.is_empty() {
            return Err(ExperimentConfigError::EmptyGrid);
        }
        Ok(out)
    }

    /// Static checks. Dataset-dependent checks happen when the run loads it.
    pub fn validate(&self, dry_run: bool) -> Result<(), ExperimentConfigError> {
        self.cells()?;
        if !dry_run {
            self.inference.validate()?;
        }
        if let SplitDirective::Random { train_frac, test_frac } = self.split {
            let ok = (0.0..=1.0).contains(&train_frac) && (0.0..=1.0).contains(&test_frac);
            if !ok || train_frac + test_frac > 1.0 + 1e-12 {
                return Err(ExperimentConfigError::Fractions);
            }
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    /// The settings that determine results, as sorted-key JSON. Output
    /// locations and transport tuning are left out so a run can be resumed
    /// from another directory or with different retry settings.
    pub fn result_relevant_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        for key in ["out", "cache_dir", "offline", "allow_failures", "dataset"] {
            obj.remove(key);
        }
        if let Some(inf) = obj.get_mut("inference").and_then(|i| i.as_object_mut()) {
            for key in [
                "endpoint_url",
                "timeout_secs",
                "max_retries",
                "max_in_flight",
                "backoff_ms",
            ] {
                inf.remove(key);
            }
        }
        v.to_string()
    }
}
