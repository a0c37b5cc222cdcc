//! Efficiency counts, imported quality annotations, and comparison tables.
//!
//! Quality scores are never computed here: they come from human annotation
//! files. [`write_annotation_template`] produces the blank file annotators
//! fill in.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::controller::{
    default_roles, start_memory, Controller, LoopConfig, Resources, Termination, Timings,
    TurnResult,
};
use crate::error::{Error, Result};
use crate::llm::{AgentStep, LanguageModel, ScriptEntry, ScriptedBackend};
use crate::memory::TaskTrajectory;
use crate::prompt::{FrameworkKind, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyMetrics {
    pub plan_steps: u32,
    pub action_steps: u32,
    pub inference_seconds: f64,
}

/// Thoughts count as plan steps; Actions that reached a tool count as action
/// steps. Rejected calls and the Finish step count as neither.
pub fn count_efficiency(trajectory: &TaskTrajectory, timings: &Timings) -> EfficiencyMetrics {
    let mut m = EfficiencyMetrics {
        plan_steps: 0,
        action_steps: 0,
        inference_seconds: timings.total_seconds,
    };
    for step in &trajectory.steps {
        match step {
            AgentStep::Thought { .. } => m.plan_steps += 1,
            AgentStep::Action {
                call: Some(_),
                diagnostic: None,
                ..
            } => m.action_steps += 1,
            _ => {}
        }
    }
    m
}

pub const DIMENSIONS: [&str; 4] = ["specificity", "factuality", "coherence", "naturalness"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityAnnotation {
    pub record_id: String,
    pub specificity: u8,
    pub factuality: u8,
    pub coherence: u8,
    pub naturalness: u8,
}

impl QualityAnnotation {
    pub fn scores(&self) -> [u8; 4] {
        [
            self.specificity,
            self.factuality,
            self.coherence,
            self.naturalness,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.record_id.trim().is_empty() {
            return Err(Error::Validation(
                "annotation has an empty record_id".into(),
            ));
        }
        for (name, score) in DIMENSIONS.iter().zip(self.scores()) {
            if score > 2 {
                return Err(Error::Validation(format!(
                    "record {}: {name} score {score} is outside 0..=2",
                    self.record_id
                )));
            }
        }
        Ok(())
    }
}

pub fn parse_annotations(text: &str, origin: &str) -> Result<Vec<QualityAnnotation>> {
    let list: Vec<QualityAnnotation> = crate::jsonl::parse_lines(text, Path::new(origin))?;
    let mut seen = BTreeSet::new();
    for a in &list {
        a.validate()?;
        if !seen.insert(a.record_id.as_str()) {
            return Err(Error::Validation(format!(
                "record {} is annotated twice",
                a.record_id
            )));
        }
    }
    Ok(list)
}

pub fn load_annotations(path: &Path) -> Result<Vec<QualityAnnotation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, &path.display().to_string())
}

/// One evaluated turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub record_id: String,
    pub scenario_id: String,
    pub framework: FrameworkKind,
    pub mode: Mode,
    /// Backend label, used as the row name when comparing methods.
    pub method: String,
    pub turn_index: u32,
    pub query: String,
    pub response: String,
    pub termination: Termination,
    #[serde(flatten)]
    pub metrics: EfficiencyMetrics,
}

/// Per-dimension means over annotated records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMeans {
    pub specificity: f64,
    pub factuality: f64,
    pub coherence: f64,
    pub naturalness: f64,
}

impl QualityMeans {
    pub fn overall(&self) -> f64 {
        self.specificity + self.factuality + self.coherence + self.naturalness
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkReport {
    pub framework: FrameworkKind,
    pub mode: Mode,
    pub method: String,
    pub n: usize,
    pub plan_steps: f64,
    pub action_steps: f64,
    pub inference_seconds: f64,
    pub quality: Option<QualityMeans>,
    pub overall_quality: Option<f64>,
    /// Records with no annotation; non-empty means the quality part is partial.
    #[serde(default)]
    pub missing_annotations: Vec<String>,
}

/// Means over `records`, which must share framework, mode and method.
/// Quality columns are filled when any record is annotated.
pub fn aggregate_report(
    records: &[EvalRecord],
    annotations: &[QualityAnnotation],
) -> Result<FrameworkReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::Validation("no records to aggregate".into()))?;
    if let Some(r) = records
        .iter()
        .find(|r| (r.framework, r.mode, &r.method) != (first.framework, first.mode, &first.method))
    {
        return Err(Error::Validation(format!(
            "record {} belongs to {}/{}/{}, expected {}/{}/{}",
            r.record_id, r.framework, r.mode, r.method, first.framework, first.mode, first.method
        )));
    }
    let by_id: BTreeMap<&str, &QualityAnnotation> = annotations
        .iter()
        .map(|a| (a.record_id.as_str(), a))
        .collect();

    // Sorted by id so the float sums do not depend on record order.
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    let n = sorted.len() as f64;
    let plan: u64 = sorted.iter().map(|r| u64::from(r.metrics.plan_steps)).sum();
    let action: u64 = sorted
        .iter()
        .map(|r| u64::from(r.metrics.action_steps))
        .sum();
    let secs: f64 = sorted.iter().map(|r| r.metrics.inference_seconds).sum();

    let mut totals = [0u64; 4];
    let mut annotated = 0u64;
    let mut missing = Vec::new();
    for r in &sorted {
        match by_id.get(r.record_id.as_str()) {
            Some(a) => {
                annotated += 1;
                for (t, s) in totals.iter_mut().zip(a.scores()) {
                    *t += u64::from(s);
                }
            }
            None => missing.push(r.record_id.clone()),
        }
    }
    if !missing.is_empty() && annotated > 0 {
        tracing::warn!(
            missing = missing.len(),
            "partial report: {} records lack annotations",
            missing.len()
        );
    }
    let quality = (annotated > 0).then(|| {
        let mean = |i: usize| totals[i] as f64 / annotated as f64;
        QualityMeans {
            specificity: mean(0),
            factuality: mean(1),
            coherence: mean(2),
            naturalness: mean(3),
        }
    });
    Ok(FrameworkReport {
        framework: first.framework,
        mode: first.mode,
        method: first.method.clone(),
        n: sorted.len(),
        plan_steps: plan as f64 / n,
        action_steps: action as f64 / n,
        inference_seconds: secs / n,
        overall_quality: quality.map(|q| q.overall()),
        quality,
        missing_annotations: if annotated > 0 { missing } else { Vec::new() },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Framework,
    Method,
}

#[derive(Clone, Copy)]
enum Better {
    Higher,
    Lower,
}

struct Column {
    header: &'static str,
    decimals: usize,
    better: Better,
    value: fn(&FrameworkReport) -> Option<f64>,
}

fn columns(axis: Axis) -> Vec<Column> {
    let mut cols = vec![
        Column {
            header: "Spec.",
            decimals: 2,
            better: Better::Higher,
            value: |r| r.quality.map(|q| q.specificity),
        },
        Column {
            header: "Fact.",
            decimals: 2,
            better: Better::Higher,
            value: |r| r.quality.map(|q| q.factuality),
        },
        Column {
            header: "Coher.",
            decimals: 2,
            better: Better::Higher,
            value: |r| r.quality.map(|q| q.coherence),
        },
        Column {
            header: "Nat.",
            decimals: 2,
            better: Better::Higher,
            value: |r| r.quality.map(|q| q.naturalness),
        },
        Column {
            header: "Ov. Qual. Score",
            decimals: 2,
            better: Better::Higher,
            value: |r| r.overall_quality,
        },
        Column {
            header: "Plan Steps",
            decimals: 2,
            better: Better::Lower,
            // Act-Only has no planning step to count.
            value: |r| r.framework.has_thoughts().then_some(r.plan_steps),
        },
        Column {
            header: "Act. Steps",
            decimals: 2,
            better: Better::Lower,
            value: |r| Some(r.action_steps),
        },
    ];
    if axis == Axis::Framework {
        cols.push(Column {
            header: "Inf. Speed(s)",
            decimals: 3,
            better: Better::Lower,
            value: |r| Some(r.inference_seconds),
        });
    }
    cols
}

fn row_label(r: &FrameworkReport, axis: Axis) -> String {
    match axis {
        Axis::Framework => r.framework.display_name().to_string(),
        Axis::Method => {
            let mode = match r.mode {
                Mode::Prompting => "Prompting",
                Mode::Finetuned => "Fine-tuning",
            };
            format!("{mode} ({})", r.method)
        }
    }
}

/// Aligned table with one row per report. The best value of each column is
/// suffixed with `*`; ties all get the mark.
pub fn render_comparison(reports: &[FrameworkReport], axis: Axis) -> Result<String> {
    if reports.len() < 2 {
        return Err(Error::Validation(
            "a comparison needs at least two reports".into(),
        ));
    }
    let with_quality = reports.iter().filter(|r| r.quality.is_some()).count();
    if with_quality != 0 && with_quality != reports.len() {
        return Err(Error::Validation(
            "reports disagree on whether quality scores are present".into(),
        ));
    }
    // Columns nobody has a value for (quality, when unannotated) are dropped.
    let cols: Vec<Column> = columns(axis)
        .into_iter()
        .filter(|c| reports.iter().any(|r| (c.value)(r).is_some()))
        .collect();
    let mut cells: Vec<Vec<String>> = Vec::with_capacity(reports.len());
    for r in reports {
        cells.push(vec![row_label(r, axis)]);
    }
    for col in &cols {
        let shown: Vec<Option<String>> = reports
            .iter()
            .map(|r| (col.value)(r).map(|v| format!("{v:.*}", col.decimals)))
            .collect();
        // Compare the rounded values so the marks agree with what is printed.
        let numeric: Vec<Option<f64>> = shown
            .iter()
            .map(|s| {
                s.as_ref()
                    .map(|s| s.parse::<f64>().expect("formatted float"))
            })
            .collect();
        let best = numeric
            .iter()
            .flatten()
            .copied()
            .reduce(|a, b| match col.better {
                Better::Higher => a.max(b),
                Better::Lower => a.min(b),
            });
        for (i, s) in shown.into_iter().enumerate() {
            cells[i].push(match (s, numeric[i]) {
                (Some(s), Some(v)) if Some(v) == best => format!("{s}*"),
                (Some(s), _) => s,
                (None, _) => "-".to_string(),
            });
        }
    }
    let mut headers = vec![match axis {
        Axis::Framework => "Framework",
        Axis::Method => "Method",
    }];
    headers.extend(cols.iter().map(|c| c.header));
    let widths: Vec<usize> = (0..headers.len())
        .map(|j| {
            cells
                .iter()
                .map(|row| row[j].len())
                .chain([headers[j].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |row: Vec<String>| {
        let parts: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if j == 0 {
                    format!("{c:<w$}", w = widths[j])
                } else {
                    format!("{c:>w$}", w = widths[j])
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = vec![line(headers.iter().map(|h| h.to_string()).collect())];
    out.push("-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.extend(cells.into_iter().map(line));
    Ok(out.join("\n") + "\n")
}

/// A scripted multi-turn conversation. `scripts` maps a framework slug to
/// the backend script used for that framework; `*` is the fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub queries: Vec<String>,
    #[serde(default)]
    pub scripts: BTreeMap<String, Vec<ScriptEntry>>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::Validation("scenario id must be non-empty".into()));
        }
        if self.queries.is_empty() || self.queries.iter().any(|q| q.trim().is_empty()) {
            return Err(Error::Validation(format!(
                "scenario {} needs at least one non-empty query",
                self.id
            )));
        }
        for key in self.scripts.keys() {
            if key != "*" && key.parse::<FrameworkKind>().is_err() {
                return Err(Error::Validation(format!(
                    "scenario {}: unknown framework `{key}` in scripts",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn script_for(&self, framework: FrameworkKind) -> Option<&[ScriptEntry]> {
        self.scripts
            .get(framework.slug())
            .or_else(|| self.scripts.get("*"))
            .map(Vec::as_slice)
    }

    pub fn backend_for(&self, framework: FrameworkKind) -> Result<ScriptedBackend> {
        let entries = self.script_for(framework).ok_or_else(|| {
            Error::Validation(format!(
                "scenario {} has no script for {framework}",
                self.id
            ))
        })?;
        Ok(ScriptedBackend::new(entries.to_vec())?)
    }
}

/// Reads one scenario file, or every `*.json` file of a directory in name
/// order.
pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: f.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        s.validate()?;
        if !ids.insert(s.id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate scenario id `{}`",
                s.id
            )));
        }
        out.push(s);
    }
    if out.is_empty() {
        return Err(Error::Validation(format!(
            "no scenarios found at {}",
            path.display()
        )));
    }
    Ok(out)
}

/// A turn together with the scenario it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub scenario_id: String,
    pub framework: FrameworkKind,
    #[serde(flatten)]
    pub turn: TurnResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub records: Vec<EvalRecord>,
    pub traces: Vec<ScenarioTrace>,
}

/// Runs every scenario on a fresh memory. With `backend` set, each scenario
/// gets a fork of it; otherwise the scenario's own script drives the model.
pub fn run_scenarios(
    resources: &Resources,
    config: &LoopConfig,
    scenarios: &[Scenario],
    backend: Option<&Arc<dyn LanguageModel>>,
) -> Result<EvalRun> {
    config.validate()?;
    let mut run = EvalRun {
        records: Vec::new(),
        traces: Vec::new(),
    };
    for scenario in scenarios {
        let model: Arc<dyn LanguageModel> = match backend {
            Some(b) => b.fork(),
            None => Arc::new(scenario.backend_for(config.framework)?),
        };
        let controller = Controller::new(resources, model.as_ref(), config);
        let mut memory = start_memory(
            config,
            &resources.registry,
            &default_roles(),
            chrono::Utc::now(),
        )?;
        let turns = controller.run_dialogue(&mut memory, &scenario.queries)?;
        for t in turns {
            run.records.push(EvalRecord {
                record_id: format!("{}#t{}", scenario.id, t.turn_index),
                scenario_id: scenario.id.clone(),
                framework: config.framework,
                mode: config.mode,
                method: model.name().to_string(),
                turn_index: t.turn_index,
                query: t.query.clone(),
                response: t.response.clone(),
                termination: t.termination,
                metrics: count_efficiency(&t.trajectory, &t.timings),
            });
            run.traces.push(ScenarioTrace {
                scenario_id: scenario.id.clone(),
                framework: config.framework,
                turn: t,
            });
        }
    }
    Ok(run)
}

/// Writes `records.jsonl`, `traces.jsonl`, `report.json` and `report.txt`.
pub fn write_run(out_dir: &Path, run: &EvalRun, report: &FrameworkReport) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    crate::jsonl::write(&out_dir.join("records.jsonl"), &run.records)?;
    crate::jsonl::write(&out_dir.join("traces.jsonl"), &run.traces)?;
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    let path = out_dir.join("report.json");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let path = out_dir.join("report.txt");
    fs::write(&path, render_summary(report)).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Text form of a single report.
pub fn render_summary(r: &FrameworkReport) -> String {
    let mut lines = vec![
        format!("framework: {}", r.framework.display_name()),
        format!("mode: {}", r.mode),
        format!("method: {}", r.method),
        format!("records: {}", r.n),
        format!(
            "plan steps: {}",
            if r.framework.has_thoughts() {
                format!("{:.2}", r.plan_steps)
            } else {
                "-".into()
            }
        ),
        format!("action steps: {:.2}", r.action_steps),
        format!("inference seconds: {:.3}", r.inference_seconds),
    ];
    match (&r.quality, r.overall_quality) {
        (Some(q), Some(o)) => {
            lines.push(format!(
                "quality: spec {:.2}, fact {:.2}, coher {:.2}, nat {:.2}, overall {o:.2}",
                q.specificity, q.factuality, q.coherence, q.naturalness
            ));
            if !r.missing_annotations.is_empty() {
                lines.push(format!(
                    "partial: unannotated {}",
                    r.missing_annotations.join(", ")
                ));
            }
        }
        _ => lines.push("quality: not annotated".into()),
    }
    lines.join("\n") + "\n"
}

/// Blank annotation sheet for `records`: one line per record with the text
/// to judge and null scores. The loader rejects it until every score is set.
pub fn write_annotation_template(records: &[EvalRecord], path: &Path) -> Result<()> {
    let rows: Vec<serde_json::Value> = records
        .iter()
        .map(|r| {
            serde_json::json!({
                "record_id": r.record_id,
                "query": r.query,
                "response": r.response,
                "specificity": null,
                "factuality": null,
                "coherence": null,
                "naturalness": null,
            })
        })
        .collect();
    crate::jsonl::write(path, &rows)
}

/// Scoring guide shipped next to annotation templates.
pub const RUBRIC: &str = include_str!("../fixtures/rubric.md");
