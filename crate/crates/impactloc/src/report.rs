//! Report rendering: CSV records for machines, Markdown tables for people.

use std::fmt::Write;

use impactloc_core::{EvalLayer, Family, LayerReport, Scores, Task};
use serde::{Deserialize, Serialize};

/// Scores of one prompt cell under one filter setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub label: String,
    pub family: Family,
    pub shots: usize,
    pub filtered: bool,
    pub layers: Vec<LayerReport>,
}

impl CellResult {
    pub fn layer(&self, layer: EvalLayer) -> Option<&LayerReport> {
        self.layers.iter().find(|l| l.layer == layer)
    }
}

/// Row labels that do not come from the results themselves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportContext {
    pub task: Task,
    pub disaster: String,
    pub model: String,
    pub finetuning: String,
    pub dataset: String,
    pub train_size: Option<usize>,
    pub test_size: usize,
    pub macro_average: bool,
}

pub const CSV_HEADER: &str =
    "cell,family,shots,filtered,layer,scope,tp,fp,fn,precision,recall,f1,posts,malformed,soft_overlap";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per (cell, filter, layer, scope); scope is `overall`, `macro` or
/// `event:<id>`. Macro rows leave the counts empty.
pub fn csv_records(results: &[CellResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        for l in &r.layers {
            let prefix = format!(
                "{},{},{},{},{}",
                csv_field(&r.label),
                r.family,
                r.shots,
                r.filtered,
                l.layer
            );
            let mut row = |scope: &str, counts: Option<(usize, usize, usize)>, s: Scores| {
                let counts = counts.map_or(",,".to_string(), |(tp, fp, fn_)| format!("{tp},{fp},{fn_}"));
                let _ = writeln!(
                    out,
                    "{prefix},{},{counts},{:.6},{:.6},{:.6},{},{},{:.6}",
                    csv_field(scope),
                    s.precision,
                    s.recall,
                    s.f1,
                    l.posts,
                    l.malformed,
                    l.soft_overlap
                );
            };
            row("overall", Some((l.overall.tp, l.overall.fp, l.overall.fn_)), l.micro());
            row("macro", None, l.macro_scores());
            for (event, t) in &l.per_event {
                row(&format!("event:{event}"), Some((t.tp, t.fp, t.fn_)), t.scores());
            }
        }
    }
    out
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Basic => "Basic",
        Family::Persona => "Persona",
        Family::Cot => "CoT",
    }
}

fn shots_name(n: usize) -> String {
    match n {
        0 => "zero-shot".into(),
        1 => "one-shot".into(),
        n => format!("{n}-shots"),
    }
}

fn scores(ctx: &ReportContext, l: Option<&LayerReport>) -> Scores {
    match l {
        Some(l) if ctx.macro_average => l.macro_scores(),
        Some(l) => l.micro(),
        None => Scores::default(),
    }
}

fn prf(s: Scores) -> String {
    format!("{:.2} | {:.2} | {:.2}", s.precision, s.recall, s.f1)
}

/// All-locations layout: one row per prompt cell and filter setting.
pub fn locations_table(ctx: &ReportContext, results: &[CellResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| Prompt | Shots | Post-processing | Precision | Recall | F1 |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for r in results {
        let s = scores(ctx, r.layer(EvalLayer::AllLocations));
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            family_name(r.family),
            shots_name(r.shots),
            if r.filtered { "Yes" } else { "No" },
            prf(s)
        );
    }
    out
}

/// Impact layout: one row per prompt cell and filter setting with the
/// impact and impacted-location scores side by side.
pub fn impact_table(ctx: &ReportContext, results: &[CellResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "| Disaster | Model | Finetuning | Dataset | Train | Test | Impact P | Impact R | Impact F1 | Location P | Location R | Location F1 |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|---|---|");
    for r in results {
        let model = format!(
            "{} ({} {}{})",
            ctx.model,
            family_name(r.family),
            shots_name(r.shots),
            if r.filtered { ", filtered" } else { "" }
        );
        let train = ctx.train_size.map_or("-".to_string(), |n| n.to_string());
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            ctx.disaster,
            model,
            ctx.finetuning,
            ctx.dataset,
            train,
            ctx.test_size,
            prf(scores(ctx, r.layer(EvalLayer::Impacts))),
            prf(scores(ctx, r.layer(EvalLayer::ImpactedLocations)))
        );
    }
    out
}

pub fn human_table(ctx: &ReportContext, results: &[CellResult]) -> String {
    match ctx.task {
        Task::AllLocations => locations_table(ctx, results),
        Task::ImpactAndImpacted => impact_table(ctx, results),
    }
}
