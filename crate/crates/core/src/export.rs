//! Result files: JSON lines and a five-column CSV of anomaly reports.

use std::collections::BTreeMap;
use std::io::{self, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::screen::AnomalyReport;

/// Flat form of one report, one per JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub attributes: BTreeMap<String, Vec<String>>,
    pub region: Vec<String>,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub observed: u64,
    pub expected: f64,
    pub p_value: f64,
    pub test: String,
    /// Digest of the run manifest that produced the line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<String>,
}

impl ReportLine {
    pub fn from_report(report: &AnomalyReport, run: Option<&str>) -> Self {
        Self {
            attributes: report
                .query
                .conjunction
                .terms()
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().cloned().collect()))
                .collect(),
            region: report
                .query
                .region
                .as_ref()
                .map(|r| r.members.clone())
                .unwrap_or_default(),
            window_start: report.query.window.start,
            window_end: report.query.window.end(),
            observed: report.observed,
            expected: report.expected,
            p_value: report.p_value,
            test: report.test_used.to_string(),
            run: run.map(str::to_string),
        }
    }
}

pub fn write_jsonl<W: Write>(
    mut sink: W,
    reports: &[AnomalyReport],
    run: Option<&str>,
) -> io::Result<()> {
    for report in reports {
        serde_json::to_writer(&mut sink, &ReportLine::from_report(report, run))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

pub const CSV_COLUMNS: [&str; 5] = ["states", "end_date", "p_value", "count", "expected_count"];

fn states_cell(report: &AnomalyReport) -> String {
    match &report.query.region {
        Some(region) => region.to_string(),
        None => "ALL".to_string(),
    }
}

pub fn write_csv<W: Write>(sink: W, reports: &[AnomalyReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_COLUMNS)?;
    for report in reports {
        w.write_record([
            states_cell(report),
            report.query.window.end().to_string(),
            report.p_value.to_string(),
            report.observed.to_string(),
            report.expected.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width table of the first `n` reports.
pub fn top_table(reports: &[AnomalyReport], n: usize) -> String {
    let rows: Vec<[String; 6]> = reports
        .iter()
        .take(n)
        .map(|r| {
            let terms = r
                .query
                .conjunction
                .terms()
                .iter()
                .map(|(k, v)| format!("{k}={}", v.iter().cloned().collect::<Vec<_>>().join("|")))
                .collect::<Vec<_>>()
                .join(" ");
            [
                states_cell(r),
                r.query.window.end().to_string(),
                format!("{:.2E}", r.p_value),
                r.observed.to_string(),
                format!("{:.2}", r.expected),
                terms,
            ]
        })
        .collect();
    let header = ["States", "End date", "P-Value", "Count", "Expected Count", "Terms"];
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
