use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use impactloc::config::{ExperimentConfig, FilterMode, SplitDirective};
use impactloc::inference::{HttpTransport, NoTransport, Transport};
use impactloc::instructions::export_instruction_records;
use impactloc::io::{load_brat, load_canonical, read_jsonl, save_canonical, write_jsonl};
use impactloc::report::{csv_records, human_table};
use impactloc::runner::{apply_split, filter_prediction, load_dataset, load_results, Runner};
use impactloc_core::corpus::{corpus_stats, filter_categories, Category, DisasterType, KappaLayer};
use impactloc_core::eval::{gold_entities, EvalLayer};
use impactloc_core::grounding::{check_all_locations, check_entities, EntityCheck};
use impactloc_core::parse::{parse_or_empty, parse_response};
use impactloc_core::prediction::{ImpactPrediction, LocationPrediction};
use impactloc_core::{
    build_prompt, evaluate, Dataset, EvalOptions, Family, MatchPolicy, PostPrediction, Prediction, PromptSpec, Task,
};

#[derive(Parser)]
#[command(
    name = "impactloc",
    version,
    about = "Disaster impact and impacted-location extraction and evaluation"
)]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a BRAT directory (or re-normalize a canonical file) into a canonical corpus file.
    Ingest {
        #[arg(long, conflicts_with = "input", required_unless_present = "input")]
        brat: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Keep only these categories (repeatable).
        #[arg(long)]
        category: Vec<Category>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Post and span counts, overall and per event.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write train/test corpus files for a split directive.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, requires = "test_frac")]
        train_frac: Option<f64>,
        #[arg(long)]
        test_frac: Option<f64>,
        #[arg(long)]
        holdout_event: Option<String>,
        #[arg(long)]
        disaster_type: Option<DisasterType>,
    },
    /// Token-level Cohen's kappa between two annotations of the same posts.
    Kappa {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Print the prompt for one cell.
    PromptPreview {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 0)]
        shots: usize,
        #[arg(long, default_value = "<tweet>")]
        post: String,
    },
    /// Show how a raw response parses.
    ParseDebug {
        #[arg(long)]
        task: Task,
        /// Response file, or `-` for stdin.
        #[arg(long, default_value = "-")]
        response: PathBuf,
    },
    /// Show the grounding filter's decision for every predicted entity.
    FilterDebug {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        post: String,
        /// Response file, or `-` for stdin.
        #[arg(long, default_value = "-")]
        response: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Score predictions against a gold corpus.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        task: Task,
        /// Prediction records, one per line.
        #[arg(
            long,
            conflicts_with = "gold_predictions",
            required_unless_present = "gold_predictions"
        )]
        predictions: Option<PathBuf>,
        /// Use the gold annotations of this corpus file as predictions.
        #[arg(long)]
        gold_predictions: Option<PathBuf>,
        /// Apply the grounding filter before scoring.
        #[arg(long)]
        filter: bool,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        case_sensitive: bool,
        #[arg(long)]
        no_dedup: bool,
        #[arg(long)]
        by_event: bool,
    },
    /// Re-render the tables of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
        #[arg(long = "macro")]
        macro_average: bool,
    },
    /// Run an experiment grid from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dry_run: bool,
        #[arg(long)]
        no_filter: bool,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Serve responses from the cache only.
        #[arg(long)]
        offline: bool,
    },
    /// Write instruction-tuning records (prompt and gold answer) for a corpus.
    ExportInstructions {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "persona")]
        family: Family,
        #[arg(long, default_value_t = 6)]
        shots: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Csv,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long)]
    match_case: bool,
    #[arg(long)]
    keep_sigils: bool,
    #[arg(long)]
    no_nfc: bool,
    /// Match raw substrings instead of whole tokens.
    #[arg(long)]
    substring: bool,
    #[arg(long)]
    partial_hashtags: bool,
}

impl PolicyArgs {
    fn policy(&self) -> MatchPolicy {
        MatchPolicy {
            case_insensitive: !self.match_case,
            strip_hash_and_at: !self.keep_sigils,
            unicode_nfc: !self.no_nfc,
            word_boundary: !self.substring,
            whole_hashtag_only: !self.partial_hashtags,
        }
    }
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn gold_as_predictions(d: &Dataset, task: Task) -> Vec<PostPrediction> {
    d.posts()
        .iter()
        .map(|p| {
            let owned = |layer| {
                gold_entities(&p.gold, layer)
                    .into_iter()
                    .map(String::from)
                    .collect::<Vec<_>>()
            };
            let prediction = match task {
                Task::AllLocations => {
                    let mut counts: Vec<(String, u32)> = Vec::new();
                    for s in owned(EvalLayer::AllLocations) {
                        match counts.iter_mut().find(|(k, _)| *k == s) {
                            Some(e) => e.1 += 1,
                            None => counts.push((s, 1)),
                        }
                    }
                    Prediction::AllLocations(counts.into_iter().collect::<LocationPrediction>())
                }
                Task::ImpactAndImpacted => Prediction::ImpactAndImpacted(ImpactPrediction {
                    impacts: owned(EvalLayer::Impacts),
                    impacted_locations: owned(EvalLayer::ImpactedLocations),
                }),
            };
            PostPrediction {
                post_id: p.post_id.clone(),
                prediction,
                malformed: false,
            }
        })
        .collect()
}

fn print_checks(title: &str, checks: &[EntityCheck]) {
    println!("{title}");
    println!(
        "  {:<32} {:>7} {:>6} {:>6}  verdict",
        "entity", "claimed", "actual", "merged"
    );
    for c in checks {
        let claimed = c.claimed.map_or("-".to_string(), |n| n.to_string());
        let verdict = serde_json::to_value(c.verdict).expect("verdict serializes");
        println!(
            "  {:<32} {:>7} {:>6} {:>6}  {}",
            c.surface,
            claimed,
            c.actual,
            c.merged,
            verdict.as_str().unwrap_or_default()
        );
    }
}

fn stats(dataset: &Path, json: bool) -> Result<()> {
    let d = load_dataset(dataset)?;
    let s = corpus_stats(&d);
    if json {
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(());
    }
    println!(
        "{:<32} {:>6} {:>8} {:>9} {:>9} {:>8}",
        "event", "posts", "impacts", "impacted", "locations", "ratio"
    );
    let row = |name: &str, c: &impactloc_core::corpus::LayerCounts| {
        let ratio = c
            .impacted_ratio()
            .map_or("-".to_string(), |r| format!("{:.1}%", r * 100.0));
        println!(
            "{:<32} {:>6} {:>8} {:>9} {:>9} {:>8}",
            name, c.posts, c.impacts, c.impacted_locations, c.all_locations, ratio
        );
    };
    for (event, c) in &s.per_event {
        row(event, c);
    }
    row("overall", &s.overall);
    Ok(())
}

fn split(
    dataset: &Path,
    out: &Path,
    seed: u64,
    fracs: Option<(f64, f64)>,
    holdout_event: Option<String>,
    disaster_type: Option<DisasterType>,
) -> Result<()> {
    let directive = match (fracs, holdout_event, disaster_type) {
        (Some((train_frac, test_frac)), None, None) => SplitDirective::Random { train_frac, test_frac },
        (None, Some(event), None) => SplitDirective::EventHoldout { event },
        (None, holdout_event, Some(disaster_type)) => SplitDirective::DisasterType {
            disaster_type,
            holdout_event,
        },
        (None, None, None) => bail!("give --train-frac/--test-frac, --holdout-event or --disaster-type"),
        _ => bail!("--train-frac/--test-frac cannot be combined with other split options"),
    };
    let d = load_dataset(dataset)?;
    let (train, test) = apply_split(&d, &directive, seed)?;
    if let Some(train) = &train {
        save_canonical(train, &out.join("train.jsonl"))?;
        println!("train {}", train.len());
    }
    save_canonical(&test, &out.join("test.jsonl"))?;
    println!("test {}", test.len());
    Ok(())
}

fn run(config: &Path, overrides: RunOverrides) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(d) = overrides.dataset {
        cfg.dataset = d;
    }
    if let Some(o) = overrides.out {
        cfg.out = o;
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if overrides.no_filter {
        cfg.filter = FilterMode::Off;
    }
    if let Some(e) = overrides.endpoint {
        cfg.inference.endpoint_url = Some(e);
    }
    if let Some(m) = overrides.model {
        cfg.inference.model_id = m;
    }
    cfg.offline |= overrides.offline;

    let transport: Box<dyn Transport> = if overrides.dry_run || cfg.offline {
        Box::new(NoTransport)
    } else {
        match HttpTransport::from_config(&cfg.inference) {
            Some(t) => Box::new(t),
            None => {
                log::warn!("no endpoint configured; only cached responses are available");
                Box::new(NoTransport)
            }
        }
    };
    let summary = Runner::new(&cfg).dry_run(overrides.dry_run).run(transport)?;
    if overrides.dry_run {
        println!(
            "dry run: rendered {} prompts under {}",
            summary.prompts_rendered,
            summary.out.join("cells").display()
        );
    } else {
        print!("{}", summary.table.unwrap_or_default());
        println!(
            "{} requests sent; artifacts in {}",
            summary.requests_sent,
            summary.out.display()
        );
    }
    Ok(())
}

struct RunOverrides {
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    dry_run: bool,
    no_filter: bool,
    endpoint: Option<String>,
    model: Option<String>,
    offline: bool,
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            brat,
            input,
            category,
            out,
        } => {
            let mut d = match (brat, input) {
                (Some(dir), _) => {
                    let (d, warnings) = load_brat(&dir)?;
                    if !warnings.is_empty() {
                        eprintln!("{} annotation warning(s)", warnings.len());
                    }
                    d
                }
                (None, Some(file)) => load_canonical(&file)?,
                (None, None) => bail!("give --brat or --input"),
            };
            if !category.is_empty() {
                let keep: BTreeSet<Category> = category.into_iter().collect();
                d = filter_categories(&d, &keep);
            }
            save_canonical(&d, &out)?;
            println!("wrote {} posts to {}", d.len(), out.display());
        }
        Command::Stats { dataset, json } => stats(&dataset, json)?,
        Command::Split {
            dataset,
            out,
            seed,
            train_frac,
            test_frac,
            holdout_event,
            disaster_type,
        } => {
            let fracs = match (train_frac, test_frac) {
                (Some(a), Some(b)) => Some((a, b)),
                (None, None) => None,
                _ => bail!("--train-frac and --test-frac go together"),
            };
            split(&dataset, &out, seed, fracs, holdout_event, disaster_type)?
        }
        Command::Kappa { a, b } => {
            let (a, b) = (load_dataset(&a)?, load_dataset(&b)?);
            for (name, layer) in [
                ("impact", KappaLayer::Impact),
                ("impacted_location", KappaLayer::ImpactedLocation),
            ] {
                let c = impactloc_core::corpus::confusion(&a, &b, layer)?;
                let k = impactloc_core::corpus::kappa_from_confusion(&c)?;
                println!(
                    "{name}: kappa {k:.4} (yes/yes {}, yes/no {}, no/yes {}, no/no {})",
                    c.yes_yes, c.yes_no, c.no_yes, c.no_no
                );
            }
        }
        Command::PromptPreview {
            task,
            family,
            shots,
            post,
        } => {
            let spec = PromptSpec::new(task, family, shots)?;
            println!("{}", build_prompt(&spec, &post)?);
        }
        Command::ParseDebug { task, response } => {
            let raw = read_input(&response)?;
            match parse_response(&raw, task) {
                Ok(p) => println!("{}", serde_json::to_string_pretty(&p)?),
                Err(e) => {
                    println!("malformed: {e}");
                    println!("{}", serde_json::to_string_pretty(&parse_or_empty(&raw, task))?);
                }
            }
        }
        Command::FilterDebug {
            task,
            post,
            response,
            policy,
        } => {
            let raw = read_input(&response)?;
            let parsed = parse_or_empty(&raw, task);
            if parsed.malformed {
                println!("response is malformed; nothing to filter");
            }
            let policy = policy.policy();
            match &parsed.prediction {
                Prediction::AllLocations(l) => print_checks("locations", &check_all_locations(l, &post, &policy)),
                Prediction::ImpactAndImpacted(i) => {
                    print_checks("impacts", &check_entities(&i.impacts, &post, &policy));
                    print_checks(
                        "impacted locations",
                        &check_entities(&i.impacted_locations, &post, &policy),
                    );
                }
            }
            let filtered = filter_prediction(&parsed.prediction, &post, &policy);
            println!("{}", serde_json::to_string_pretty(&filtered)?);
        }
        Command::Evaluate {
            dataset,
            task,
            predictions,
            gold_predictions,
            filter,
            policy,
            case_sensitive,
            no_dedup,
            by_event,
        } => {
            let gold = load_dataset(&dataset)?;
            let mut preds: Vec<PostPrediction> = match (predictions, gold_predictions) {
                (Some(p), _) => read_jsonl(&p)?,
                (None, Some(g)) => gold_as_predictions(&load_dataset(&g)?, task),
                (None, None) => bail!("give --predictions or --gold-predictions"),
            };
            if filter {
                let policy = policy.policy();
                for p in &mut preds {
                    let post = gold
                        .get(&p.post_id)
                        .with_context(|| format!("unknown post {}", p.post_id))?;
                    p.prediction = filter_prediction(&p.prediction, &post.text, &policy);
                }
            }
            let opts = EvalOptions {
                case_sensitive,
                deduplicate: !no_dedup,
            };
            for layer in EvalLayer::for_task(task) {
                let r = evaluate(&preds, &gold, *layer, &opts)?;
                let m = r.micro();
                let t = r.overall;
                println!(
                    "{layer}: P {:.4} R {:.4} F1 {:.4} (tp {}, fp {}, fn {}; {} posts, {} malformed, soft overlap {:.4})",
                    m.precision, m.recall, m.f1, t.tp, t.fp, t.fn_, r.posts, r.malformed, r.soft_overlap
                );
                if by_event {
                    for (event, t) in &r.per_event {
                        let s = t.scores();
                        println!("  {event}: P {:.4} R {:.4} F1 {:.4}", s.precision, s.recall, s.f1);
                    }
                    let s = r.macro_scores();
                    println!("  macro: P {:.4} R {:.4} F1 {:.4}", s.precision, s.recall, s.f1);
                }
            }
        }
        Command::Report {
            run,
            format,
            macro_average,
        } => {
            let (_, mut ctx, results) = load_results(&run)?;
            ctx.macro_average |= macro_average;
            match format {
                ReportFormat::Table => print!("{}", human_table(&ctx, &results)),
                ReportFormat::Csv => print!("{}", csv_records(&results)),
            }
        }
        Command::Run {
            config,
            dataset,
            out,
            seed,
            dry_run,
            no_filter,
            endpoint,
            model,
            offline,
        } => run(
            &config,
            RunOverrides {
                dataset,
                out,
                seed,
                dry_run,
                no_filter,
                endpoint,
                model,
                offline,
            },
        )?,
        Command::ExportInstructions {
            dataset,
            out,
            family,
            shots,
        } => {
            let d = load_dataset(&dataset)?;
            let spec = PromptSpec::new(Task::ImpactAndImpacted, family, shots)?;
            let records = export_instruction_records(&d, &spec)?;
            write_jsonl(&out, &records)?;
            println!("wrote {} records to {}", records.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Exit quietly when stdout is a closed pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
