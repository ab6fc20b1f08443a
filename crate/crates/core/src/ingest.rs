//! Parsing, validation and summary statistics for event records.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{bin_age, AttributeKind, Schema, UNKNOWN};

/// One timestamped event. `values` holds a label for every non-date attribute
/// of the schema, post-binning for the integer attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub date: NaiveDate,
    pub values: BTreeMap<String, String>,
    /// Raw value of the integer-binned attribute, when present.
    pub raw_age: Option<u32>,
}

impl EventRecord {
    pub fn value(&self, attribute: &str) -> Option<&str> {
        self.values.get(attribute).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    /// 1-based line number in the source, header included.
    pub line: u64,
    pub cause: String,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("header is missing schema column(s): {}", .0.join(", "))]
    SchemaMismatch(Vec<String>),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default, Clone)]
pub struct ParseOutput {
    pub records: Vec<EventRecord>,
    pub errors: Vec<RowError>,
}

/// Reads delimiter-separated events with a header row. Malformed rows are
/// collected rather than aborting the parse.
pub fn parse_events<R: Read>(source: R, schema: &Schema) -> Result<ParseOutput, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(source);
    let header = reader.headers()?.clone();
    // An entirely empty source has no header at all.
    if header.is_empty() {
        return Ok(ParseOutput::default());
    }
    let position: BTreeMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let missing: Vec<String> = schema
        .attributes
        .iter()
        .filter(|a| !position.contains_key(a.name.as_str()))
        .map(|a| a.name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::SchemaMismatch(missing));
    }

    let bins = schema.binned_attribute().map(|(_, b)| b);
    let mut out = ParseOutput::default();
    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.errors.push(RowError {
                    line,
                    cause: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row, &position, schema, bins.as_ref()) {
            Ok(record) => out.records.push(record),
            Err(cause) => out.errors.push(RowError { line, cause }),
        }
    }
    Ok(out)
}

fn parse_row(
    row: &csv::StringRecord,
    position: &BTreeMap<&str, usize>,
    schema: &Schema,
    bins: Option<&crate::schema::AgeBins>,
) -> Result<EventRecord, String> {
    let field = |name: &str| row.get(position[name]).unwrap_or("");
    let mut date = None;
    let mut raw_age = None;
    let mut values = BTreeMap::new();
    for attr in &schema.attributes {
        let raw = field(&attr.name);
        match &attr.kind {
            AttributeKind::Date => {
                let d = NaiveDate::parse_from_str(raw.trim(), &schema.date_format)
                    .map_err(|e| format!("bad date `{raw}` in `{}`: {e}", attr.name))?;
                if schema.start.is_some_and(|s| d < s) || schema.end.is_some_and(|e| d > e) {
                    return Err(format!("date {d} outside the declared range"));
                }
                date = Some(d);
            }
            AttributeKind::IntegerBinned { max, .. } => {
                let raw = raw.trim();
                let label = if raw.is_empty() {
                    UNKNOWN.to_string()
                } else {
                    let age: i64 = raw
                        .parse()
                        .map_err(|_| format!("bad integer `{raw}` in `{}`", attr.name))?;
                    if age < 0 || age > i64::from(*max) {
                        return Err(format!("`{}` value {age} outside [0, {max}]", attr.name));
                    }
                    let age = age as u32;
                    raw_age = Some(age);
                    bin_age(age, bins.expect("binned attribute has bins")).to_string()
                };
                values.insert(attr.name.clone(), label);
            }
            AttributeKind::Categorical { .. } => {
                values.insert(attr.name.clone(), schema.normalize_label(attr, raw));
            }
        }
    }
    Ok(EventRecord {
        date: date.expect("schema has a date attribute"),
        values,
        raw_age,
    })
}

/// Writes records in the schema's column order; the inverse of [`parse_events`].
pub fn write_events<W: Write>(
    sink: W,
    records: &[EventRecord],
    schema: &Schema,
) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(schema.attributes.iter().map(|a| a.name.as_str()))?;
    for record in records {
        let row: Vec<String> = schema
            .attributes
            .iter()
            .map(|attr| match &attr.kind {
                AttributeKind::Date => record.date.format(&schema.date_format).to_string(),
                AttributeKind::IntegerBinned { .. } => {
                    record.raw_age.map(|a| a.to_string()).unwrap_or_default()
                }
                AttributeKind::Categorical { .. } => record
                    .value(&attr.name)
                    .unwrap_or(UNKNOWN)
                    .to_string(),
            })
            .collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub total: u64,
    pub per_category_counts: BTreeMap<String, BTreeMap<String, u64>>,
    /// Absent when no record carries a known age.
    pub age_mean: Option<f64>,
    /// Sample standard deviation; absent with fewer than two known ages.
    pub age_sd: Option<f64>,
    pub age_histogram: BTreeMap<u32, u64>,
    pub date_range: Option<(NaiveDate, NaiveDate)>,
}

impl DatasetSummary {
    pub fn count(&self, attribute: &str, label: &str) -> u64 {
        self.per_category_counts
            .get(attribute)
            .and_then(|m| m.get(label))
            .copied()
            .unwrap_or(0)
    }

    pub fn ages_below(&self, bound: u32) -> u64 {
        self.age_histogram.range(..bound).map(|(_, n)| n).sum()
    }
}

pub fn summarize(records: &[EventRecord]) -> DatasetSummary {
    let mut per_category_counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut age_histogram = BTreeMap::new();
    let (mut n, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
    let mut date_range: Option<(NaiveDate, NaiveDate)> = None;
    for record in records {
        for (attr, label) in &record.values {
            *per_category_counts
                .entry(attr.clone())
                .or_default()
                .entry(label.clone())
                .or_default() += 1;
        }
        if let Some(age) = record.raw_age {
            *age_histogram.entry(age).or_insert(0) += 1;
            // Welford update.
            n += 1;
            let x = f64::from(age);
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        date_range = Some(match date_range {
            None => (record.date, record.date),
            Some((lo, hi)) => (lo.min(record.date), hi.max(record.date)),
        });
    }
    DatasetSummary {
        total: records.len() as u64,
        per_category_counts,
        age_mean: (n > 0).then_some(mean),
        age_sd: (n > 1).then(|| (m2 / (n - 1) as f64).sqrt()),
        age_histogram,
        date_range,
    }
}
