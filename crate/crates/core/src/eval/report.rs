//! Report rendering: JSON, long-form CSV, a markdown table per macro-event,
//! and plot data.

use std::str::FromStr;

use serde::Deserialize;

use super::{EvalError, EvalReport, Task, TaskScore, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
    Plotdata,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "plotdata" => Ok(ReportFormat::Plotdata),
            _ => Err(format!("unknown format `{s}` (expected json, csv, md or plotdata)")),
        }
    }
}

const CSV_HEADER: [&str; 7] = [
    "macro_event_id",
    "macro_event_label",
    "task",
    "variant",
    "precision",
    "recall",
    "f1",
];

const MARKDOWN_COLUMNS: [(Task, Variant, &str); 5] = [
    (Task::T1, Variant::Raw, "T1 F1 (raw)"),
    (Task::T1, Variant::Normalized, "T1 F1 (norm)"),
    (Task::T2, Variant::Raw, "T2 F1"),
    (Task::T3, Variant::Raw, "T3 F1"),
    (Task::T5, Variant::Raw, "T5 F1"),
];

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => report.to_json().into_bytes(),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => render_markdown(report).into_bytes(),
        ReportFormat::Plotdata => render_plotdata(report),
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn render_csv(report: &EvalReport) -> Vec<u8> {
    csv_bytes(
        &CSV_HEADER,
        report.rows.iter().map(|r| {
            vec![
                r.macro_event_id.clone(),
                r.macro_event_label.clone(),
                r.task.to_string(),
                r.variant.as_str().to_owned(),
                r.precision.to_string(),
                r.recall.to_string(),
                r.f1.to_string(),
            ]
        }),
    )
}

fn render_plotdata(report: &EvalReport) -> Vec<u8> {
    csv_bytes(
        &["macro_event", "task", "variant", "f1"],
        report.rows.iter().map(|r| {
            vec![
                r.macro_event_label.clone(),
                r.task.to_string(),
                r.variant.as_str().to_owned(),
                r.f1.to_string(),
            ]
        }),
    )
}

fn render_markdown(report: &EvalReport) -> String {
    let mut out = String::from("| Macro-event |");
    for (_, _, title) in MARKDOWN_COLUMNS {
        out.push_str(&format!(" {title} |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(MARKDOWN_COLUMNS.len()));
    out.push('\n');

    let mut seen: Vec<&str> = Vec::new();
    for r in &report.rows {
        if seen.contains(&r.macro_event_id.as_str()) {
            continue;
        }
        seen.push(&r.macro_event_id);
        out.push_str(&format!("| {} |", r.macro_event_label.replace('|', "\\|")));
        for (task, variant, _) in MARKDOWN_COLUMNS {
            match report.row(&r.macro_event_id, task, variant) {
                Some(s) => out.push_str(&format!(" {:.2} |", s.f1)),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Deserialize)]
struct CsvRow {
    macro_event_id: String,
    macro_event_label: String,
    task: Task,
    variant: Variant,
    precision: f64,
    recall: f64,
    f1: f64,
}

/// Rows of a CSV report.
pub fn parse_csv_report(bytes: &[u8]) -> Result<Vec<TaskScore>, EvalError> {
    csv::Reader::from_reader(bytes)
        .deserialize::<CsvRow>()
        .map(|r| {
            let r = r.map_err(|e| EvalError::Report(e.to_string()))?;
            Ok(TaskScore {
                task: r.task,
                macro_event_id: r.macro_event_id,
                macro_event_label: r.macro_event_label,
                variant: r.variant,
                precision: r.precision,
                recall: r.recall,
                f1: r.f1,
            })
        })
        .collect()
}
