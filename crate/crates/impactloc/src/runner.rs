//! End-to-end experiment runs: split, prompt, infer, parse, filter, score, report.
//!
//! A run directory holds `manifest.json`, one `cells/<label>/` directory per
//! prompt cell and the final `report.csv` / `report.md`. Every artifact is
//! written once; a rerun may only reproduce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use impactloc_core::corpus::{
    exclude_event, select_event, split_random, subset_by_disaster_type, DisasterType, SplitError,
};
use impactloc_core::eval::EvalError;
use impactloc_core::grounding::{filter_all_locations, filter_impact_extraction};
use impactloc_core::prompting::{build_prompt, template_resources, PromptError};
use impactloc_core::{
    evaluate, parse_or_empty, Dataset, EvalLayer, MatchPolicy, PostPrediction, Prediction, PromptSpec, Task,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::ResponseCache;
use crate::config::{ExperimentConfig, ExperimentConfigError, SplitDirective};
use crate::inference::{prompt_checksum, InferenceClient, PromptRequest, RawResponse, Transport};
use crate::io::{jsonl_bytes, load_brat, load_canonical, read_jsonl, CanonicalRecord, DataError};
use crate::report::{csv_records, human_table, CellResult, ReportContext};
use crate::sha256_hex;

pub const MANIFEST: &str = "manifest.json";
pub const REPORT_CONTEXT: &str = "report_context.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ExperimentConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("event `{0}` does not occur in the dataset")]
    UnknownEvent(String),
    #[error("no posts of disaster type `{0}` in the dataset")]
    EmptyDisasterType(DisasterType),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("{}: existing run was made with different settings ({}); use a fresh output directory", path.display(), fields.join(", "))]
    ManifestMismatch { path: PathBuf, fields: Vec<String> },
    #[error("{}: artifact exists with different content; refusing to overwrite", .0.display())]
    ArtifactConflict(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cell {cell}: {failed} of {total} requests failed (first: {first}); successful responses are cached, rerun to resume")]
    InferenceFailures {
        cell: String,
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("post {post_id}: {source}")]
    Prompt { post_id: String, source: PromptError },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a canonical corpus file, or a BRAT directory.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    if path.is_dir() {
        load_brat(path).map(|(d, _)| d)
    } else {
        load_canonical(path)
    }
}

/// Checksum of the dataset's canonical serialization.
pub fn dataset_checksum(d: &Dataset) -> String {
    let records: Vec<CanonicalRecord> = d.posts().iter().map(CanonicalRecord::from).collect();
    sha256_hex(&jsonl_bytes(&records))
}

/// Applies a split directive. Returns the training part (when the directive
/// defines one) and the evaluation part.
pub fn apply_split(d: &Dataset, split: &SplitDirective, seed: u64) -> Result<(Option<Dataset>, Dataset), RunError> {
    match split {
        SplitDirective::None => Ok((None, d.clone())),
        SplitDirective::Random { train_frac, test_frac } => {
            let (train, test) = split_random(d, *train_frac, *test_frac, seed)?;
            Ok((Some(train), test))
        }
        SplitDirective::EventHoldout { event } => {
            if !d.has_event(event) {
                return Err(RunError::UnknownEvent(event.clone()));
            }
            Ok((Some(exclude_event(d, event)), select_event(d, event)))
        }
        SplitDirective::DisasterType {
            disaster_type,
            holdout_event,
        } => {
            let sub = subset_by_disaster_type(d, *disaster_type);
            if sub.is_empty() {
                return Err(RunError::EmptyDisasterType(*disaster_type));
            }
            match holdout_event {
                None => Ok((None, sub)),
                Some(event) if sub.has_event(event) => {
                    Ok((Some(exclude_event(&sub, event)), select_event(&sub, event)))
                }
                Some(event) => Err(RunError::UnknownEvent(event.clone())),
            }
        }
    }
}

/// What a run directory was produced from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_checksum: String,
    pub seed: u64,
    pub task: Task,
    pub model_id: String,
    pub dataset_checksum: String,
    pub template_checksums: BTreeMap<String, String>,
    pub cells: Vec<String>,
    pub train_posts: Option<usize>,
    pub eval_posts: usize,
}

impl Manifest {
    /// Names of the fields that differ from `other`.
    pub fn differences(&self, other: &Manifest) -> Vec<String> {
        let a = serde_json::to_value(self).expect("manifest serializes");
        let b = serde_json::to_value(other).expect("manifest serializes");
        let (a, b) = (a.as_object().expect("object"), b.as_object().expect("object"));
        a.keys().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
    }
}

pub fn template_checksums() -> BTreeMap<String, String> {
    template_resources()
        .iter()
        .map(|(name, body)| (name.to_string(), sha256_hex(body.as_bytes())))
        .collect()
}

/// Writes `bytes` unless the file already holds exactly them.
pub fn write_once(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    match fs::read(path) {
        Ok(existing) if existing == bytes => return Ok(()),
        Ok(_) => return Err(RunError::ArtifactConflict(path.to_path_buf())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(path)(e)),
    }
    let dir = path.parent().expect("artifact path has a parent");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().expect("artifact has a file name").to_string_lossy()
    ));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// A rendered prompt as stored in `prompts.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub post_id: String,
    pub prompt_checksum: String,
    pub prompt: String,
}

pub fn filter_prediction(p: &Prediction, text: &str, policy: &MatchPolicy) -> Prediction {
    match p {
        Prediction::AllLocations(l) => Prediction::AllLocations(filter_all_locations(l, text, policy)),
        Prediction::ImpactAndImpacted(i) => Prediction::ImpactAndImpacted(filter_impact_extraction(i, text, policy)),
    }
}

/// Parses raw responses. Failed requests and unparseable text become empty,
/// malformed predictions.
pub fn parse_responses(responses: &[RawResponse], task: Task) -> Vec<PostPrediction> {
    responses
        .iter()
        .map(|r| {
            let parsed = parse_or_empty(r.text.as_deref().unwrap_or(""), task);
            PostPrediction {
                post_id: r.post_id.clone(),
                prediction: parsed.prediction,
                malformed: parsed.malformed || r.error.is_some(),
            }
        })
        .collect()
}

/// Scores one cell's predictions on every layer of its task.
pub fn score(
    preds: &[PostPrediction],
    gold: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<Vec<impactloc_core::LayerReport>, EvalError> {
    EvalLayer::for_task(cfg.task)
        .iter()
        .map(|layer| evaluate(preds, gold, *layer, &cfg.eval))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub out: PathBuf,
    pub prompts_rendered: usize,
    pub requests_sent: usize,
    pub results: Vec<CellResult>,
    /// The Markdown table; absent on a dry run.
    pub table: Option<String>,
}

pub struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    dry_run: bool,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Self {
        Runner { cfg, dry_run: false }
    }

    /// Render prompts only: no manifest, no requests, no responses.
    pub fn dry_run(mut self, yes: bool) -> Self {
        self.dry_run = yes;
        self
    }

    pub fn run(&self, transport: Box<dyn Transport>) -> Result<RunSummary, RunError> {
        let cfg = self.cfg;
        cfg.validate(self.dry_run)?;
        let cells = cfg.cells()?;
        let dataset = load_dataset(&cfg.dataset)?;
        let (train, eval_set) = apply_split(&dataset, &cfg.split, cfg.seed)?;
        log::info!(
            "{}: {} evaluation posts, {} prompt cells",
            cfg.name,
            eval_set.len(),
            cells.len()
        );

        let out = &cfg.out;
        let mut summary = RunSummary {
            out: out.clone(),
            ..RunSummary::default()
        };
        if !self.dry_run {
            let manifest = Manifest {
                name: cfg.name.clone(),
                config_checksum: sha256_hex(cfg.result_relevant_json().as_bytes()),
                seed: cfg.seed,
                task: cfg.task,
                model_id: cfg.inference.model_id.clone(),
                dataset_checksum: dataset_checksum(&dataset),
                template_checksums: template_checksums(),
                cells: cells.iter().map(PromptSpec::label).collect(),
                train_posts: train.as_ref().map(Dataset::len),
                eval_posts: eval_set.len(),
            };
            self.check_manifest(&manifest)?;
        }

        let client = InferenceClient::new(cfg.inference.clone(), transport)
            .with_cache(ResponseCache::new(cfg.cache_dir()))
            .offline(cfg.offline);

        for spec in &cells {
            let label = spec.label();
            let dir = out.join("cells").join(&label);
            let prompts = render_prompts(spec, &eval_set)?;
            summary.prompts_rendered += prompts.len();
            write_once(&dir.join("prompts.jsonl"), &jsonl_bytes(&prompts))?;
            if self.dry_run {
                continue;
            }

            let responses = self.responses(&client, &dir, &label, &prompts, &mut summary)?;
            let parsed = parse_responses(&responses, cfg.task);
            write_once(&dir.join("parsed.jsonl"), &jsonl_bytes(&parsed))?;

            let mut cell_results = Vec::new();
            for &filtered in cfg.filter.settings() {
                let preds = if filtered {
                    let f: Vec<PostPrediction> = parsed
                        .iter()
                        .zip(eval_set.posts())
                        .map(|(p, post)| PostPrediction {
                            prediction: filter_prediction(&p.prediction, &post.text, &cfg.policy),
                            ..p.clone()
                        })
                        .collect();
                    write_once(&dir.join("filtered.jsonl"), &jsonl_bytes(&f))?;
                    f
                } else {
                    parsed.clone()
                };
                cell_results.push(CellResult {
                    label: label.clone(),
                    family: spec.family,
                    shots: spec.shots,
                    filtered,
                    layers: score(&preds, &eval_set, cfg)?,
                });
            }
            let eval_json = serde_json::to_vec_pretty(&cell_results).expect("results serialize");
            write_once(&dir.join("eval.json"), &eval_json)?;
            summary.results.extend(cell_results);
        }

        if !self.dry_run {
            let ctx = self.context(&dataset, train.as_ref(), &eval_set);
            let table = human_table(&ctx, &summary.results);
            write_once(
                &out.join(REPORT_CONTEXT),
                &serde_json::to_vec_pretty(&ctx).expect("context serializes"),
            )?;
            write_once(&out.join("report.csv"), csv_records(&summary.results).as_bytes())?;
            write_once(&out.join("report.md"), format!("# {}\n\n{table}", cfg.name).as_bytes())?;
            summary.table = Some(table);
        }
        Ok(summary)
    }

    fn check_manifest(&self, manifest: &Manifest) -> Result<(), RunError> {
        let path = self.cfg.out.join(MANIFEST);
        match fs::read(&path) {
            Ok(bytes) => {
                let existing: Manifest = serde_json::from_slice(&bytes).map_err(|e| RunError::ManifestMismatch {
                    path: path.clone(),
                    fields: vec![format!("unreadable manifest: {e}")],
                })?;
                let fields = existing.differences(manifest);
                if !fields.is_empty() {
                    return Err(RunError::ManifestMismatch { path, fields });
                }
                log::info!("resuming run in {}", self.cfg.out.display());
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => write_once(
                &path,
                &serde_json::to_vec_pretty(manifest).expect("manifest serializes"),
            ),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn responses(
        &self,
        client: &InferenceClient,
        dir: &Path,
        label: &str,
        prompts: &[PromptRecord],
        summary: &mut RunSummary,
    ) -> Result<Vec<RawResponse>, RunError> {
        let path = dir.join("responses.jsonl");
        if path.exists() {
            let stored: Vec<RawResponse> = read_jsonl(&path)?;
            let matches = stored.len() == prompts.len()
                && stored
                    .iter()
                    .zip(prompts)
                    .all(|(r, p)| r.post_id == p.post_id && r.prompt_checksum == p.prompt_checksum);
            if !matches {
                return Err(RunError::ArtifactConflict(path));
            }
            return Ok(stored);
        }
        let requests: Vec<PromptRequest> = prompts
            .iter()
            .map(|p| PromptRequest {
                post_id: p.post_id.clone(),
                prompt: p.prompt.clone(),
            })
            .collect();
        let responses = client.run_batch(&requests);
        summary.requests_sent += responses.iter().filter(|r| !r.cached).count();
        let failed: Vec<&RawResponse> = responses.iter().filter(|r| r.error.is_some()).collect();
        if !failed.is_empty() && !self.cfg.allow_failures {
            return Err(RunError::InferenceFailures {
                cell: label.to_string(),
                failed: failed.len(),
                total: responses.len(),
                first: failed[0].error.as_ref().map(ToString::to_string).unwrap_or_default(),
            });
        }
        write_once(&path, &jsonl_bytes(&responses))?;
        Ok(responses)
    }

    fn context(&self, dataset: &Dataset, train: Option<&Dataset>, eval_set: &Dataset) -> ReportContext {
        let labels = &self.cfg.report;
        ReportContext {
            task: self.cfg.task,
            disaster: labels.disaster.clone().unwrap_or_else(|| "All".into()),
            model: labels
                .model
                .clone()
                .unwrap_or_else(|| self.cfg.inference.model_id.clone()),
            finetuning: labels.finetuning.clone().unwrap_or_else(|| "none".into()),
            dataset: labels.dataset.clone().unwrap_or_else(|| dataset.name().to_string()),
            train_size: train.map(Dataset::len),
            test_size: eval_set.len(),
            macro_average: labels.macro_average,
        }
    }
}

/// Reloads the per-cell results of a finished run, in manifest order.
pub fn load_results(run_dir: &Path) -> Result<(Manifest, ReportContext, Vec<CellResult>), RunError> {
    let read = |name: &str| -> Result<Vec<u8>, RunError> {
        let path = run_dir.join(name);
        fs::read(&path).map_err(io_err(&path))
    };
    let bad = |path: PathBuf, e: serde_json::Error| RunError::Io {
        path,
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    };
    let manifest: Manifest = serde_json::from_slice(&read(MANIFEST)?).map_err(|e| bad(run_dir.join(MANIFEST), e))?;
    let ctx: ReportContext =
        serde_json::from_slice(&read(REPORT_CONTEXT)?).map_err(|e| bad(run_dir.join(REPORT_CONTEXT), e))?;
    let mut results = Vec::new();
    for label in &manifest.cells {
        let rel = format!("cells/{label}/eval.json");
        let cell: Vec<CellResult> = serde_json::from_slice(&read(&rel)?).map_err(|e| bad(run_dir.join(&rel), e))?;
        results.extend(cell);
    }
    Ok((manifest, ctx, results))
}

pub fn render_prompts(spec: &PromptSpec, d: &Dataset) -> Result<Vec<PromptRecord>, RunError> {
    d.posts()
        .iter()
        .map(|post| {
            let prompt = build_prompt(spec, &post.text).map_err(|source| RunError::Prompt {
                post_id: post.post_id.clone(),
                source,
            })?;
            Ok(PromptRecord {
                post_id: post.post_id.clone(),
                prompt_checksum: prompt_checksum(&prompt),
                prompt,
            })
        })
        .collect()
}
