//! Markdown and CSV evaluation reports.
//!
//! Every number is printed with four decimals; rows and columns come out in a
//! fixed order so identical inputs give identical bytes.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tmk_core::similarity::{mean_sd, CorpusAggregate};
use tmk_core::StaticReport;

use crate::judge::{Dimension, JudgeScores};
use crate::session::RefinementSession;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("nothing to report")]
    NoInputs,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportInputs {
    #[serde(default)]
    pub raw_static: Vec<StaticReport>,
    #[serde(default)]
    pub refined_static: Vec<StaticReport>,
    /// Labeled corpus aggregates, one table each.
    #[serde(default)]
    pub similarity: Vec<(String, CorpusAggregate)>,
    #[serde(default)]
    pub judge: Vec<(String, Vec<JudgeScores>)>,
    #[serde(default)]
    pub sessions: Vec<RefinementSession>,
}

impl ReportInputs {
    fn is_empty(&self) -> bool {
        self.raw_static.is_empty()
            && self.refined_static.is_empty()
            && self.similarity.is_empty()
            && self.judge.is_empty()
            && self.sessions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportOutput {
    pub markdown: String,
    pub csv: String,
}

impl ReportOutput {
    /// Writes `report.md` and `report.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.md"), &self.markdown)?;
        fs::write(dir.join("report.csv"), &self.csv)
    }
}

type Getter = fn(&StaticReport) -> Option<f64>;

const STATIC_ROWS: [(&str, &str, Getter); 7] = [
    ("Instructional Alignment", "Alignment", |r| r.alignment_score),
    ("Structural Binding", "Task-Method", |r| Some(r.tm_binding)),
    ("Structural Binding", "Method-Knowledge", |r| Some(r.mk_binding)),
    ("Structural Binding", "Task-Knowledge", |r| Some(r.tk_binding)),
    ("Guard Logic", "Non-trivial Guards", |r| Some(r.guard_logic)),
    ("Failure Modeling", "Fail-State Coverage", |r| Some(r.failure_modeling)),
    ("Hierarchy Depth", "Depth", |r| Some(r.hierarchy_depth as f64)),
];

fn corpus_mean(reports: &[StaticReport], get: Getter) -> Option<f64> {
    let values: Vec<f64> = reports.iter().filter_map(get).collect();
    (!values.is_empty()).then(|| mean_sd(&values).0)
}

fn num(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.4}"))
}

struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new() -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["table", "group", "metric", "statistic", "value"])
            .expect("in-memory write");
        Self { writer }
    }

    fn row(&mut self, table: &str, group: &str, metric: &str, statistic: &str, value: String) {
        self.writer
            .write_record([table, group, metric, statistic, value.as_str()])
            .expect("in-memory write");
    }

    fn finish(self) -> String {
        String::from_utf8(self.writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

pub fn emit_report(inputs: &ReportInputs) -> Result<ReportOutput, ReportError> {
    if inputs.is_empty() {
        return Err(ReportError::NoInputs);
    }
    let mut md = String::from("# TMK Evaluation Report\n");
    let mut csv = Csv::new();

    if !inputs.raw_static.is_empty() || !inputs.refined_static.is_empty() {
        md.push_str(&format!(
            "\n## Syntactic Metrics\n\nRaw models: {}. Refined models: {}.\n\n\
| Category | Metric | Raw | Refined | Abs. Diff |\n|---|---|---:|---:|---:|\n",
            inputs.raw_static.len(),
            inputs.refined_static.len()
        ));
        for (category, metric, get) in STATIC_ROWS {
            let raw = corpus_mean(&inputs.raw_static, get);
            let refined = corpus_mean(&inputs.refined_static, get);
            let diff = raw.zip(refined).map(|(a, b)| b - a);
            let diff_text = diff.map_or("n/a".into(), |d| format!("{d:+.4}"));
            md.push_str(&format!(
                "| {category} | {metric} | {} | {} | {diff_text} |\n",
                num(raw),
                num(refined)
            ));
            csv.row("syntactic", category, metric, "raw", num(raw));
            csv.row("syntactic", category, metric, "refined", num(refined));
            csv.row(
                "syntactic",
                category,
                metric,
                "diff",
                diff.map_or("n/a".into(), |d| format!("{d:.4}")),
            );
        }
    }

    for (label, agg) in &inputs.similarity {
        md.push_str(&format!(
            "\n## Semantic Similarity: {label}\n\n| Component | Metric | Mean | SD | n |\n|---|---|---:|---:|---:|\n"
        ));
        for r in &agg.rows {
            md.push_str(&format!(
                "| {} | {} | {:.4} | {:.4} | {} |\n",
                r.component, r.metric, r.mean, r.sd, r.n
            ));
            let metric = format!("{}.{}", r.component, r.metric);
            csv.row("similarity", label, &metric, "mean", format!("{:.4}", r.mean));
            csv.row("similarity", label, &metric, "sd", format!("{:.4}", r.sd));
            csv.row("similarity", label, &metric, "n", r.n.to_string());
        }
    }

    for (label, scores) in &inputs.judge {
        md.push_str(&format!(
            "\n## Judge Scores: {label}\n\n| Dimension | Mean | SD | n |\n|---|---:|---:|---:|\n"
        ));
        for d in Dimension::ALL {
            let values: Vec<f64> = scores.iter().map(|s| s.get(d)).collect();
            let (mean, sd) = mean_sd(&values);
            md.push_str(&format!(
                "| {} | {mean:.4} | {sd:.4} | {} |\n",
                d.as_str(),
                values.len()
            ));
            csv.row("judge", label, d.as_str(), "mean", format!("{mean:.4}"));
            csv.row("judge", label, d.as_str(), "sd", format!("{sd:.4}"));
            csv.row("judge", label, d.as_str(), "n", values.len().to_string());
        }
    }

    if !inputs.sessions.is_empty() {
        md.push_str(
            "\n## Refinement Time\n\n| Skill | Manual (h) | Refinement (h) | Reduction |\n|---|---:|---:|---:|\n",
        );
        let mut reductions = Vec::new();
        let mut hours = Vec::new();
        for s in &inputs.sessions {
            // open sessions count only their logged hours
            let refinement = s.refinement_hours(s.ended_at.unwrap_or(s.started_at));
            let reduction = s.reduction(s.ended_at.unwrap_or(s.started_at)).ok();
            md.push_str(&format!(
                "| {} | {:.4} | {refinement:.4} | {} |\n",
                s.skill_name,
                s.manual_baseline_hours,
                num(reduction)
            ));
            csv.row(
                "time",
                &s.skill_name,
                "hours",
                "manual",
                format!("{:.4}", s.manual_baseline_hours),
            );
            csv.row("time", &s.skill_name, "hours", "refinement", format!("{refinement:.4}"));
            csv.row("time", &s.skill_name, "reduction", "value", num(reduction));
            reductions.extend(reduction);
            hours.push(refinement);
        }
        let (mean_hours, _) = mean_sd(&hours);
        let mean_reduction = (!reductions.is_empty()).then(|| mean_sd(&reductions).0);
        md.push_str(&format!("| Mean | | {mean_hours:.4} | {} |\n", num(mean_reduction)));
        csv.row("time", "mean", "hours", "refinement", format!("{mean_hours:.4}"));
        csv.row("time", "mean", "reduction", "value", num(mean_reduction));
    }

    Ok(ReportOutput {
        markdown: md,
        csv: csv.finish(),
    })
}
