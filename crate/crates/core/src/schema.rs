//! Attribute schema for event records.
//!
//! A schema is an ordered list of attributes. Exactly one attribute carries the
//! event date; the remaining ones are categorical (a fixed label domain, optionally
//! with an alias dictionary mapping raw strings onto labels) or integer-binned
//! (raw integers folded into half-open bins). Every categorical or binned
//! attribute implicitly owns the reserved label [`UNKNOWN`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved label for blank or unrecognised attribute values.
pub const UNKNOWN: &str = "UNKNOWN";

/// Canonical date pattern of the event file format.
pub const ISO_DATE: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("duplicate attribute name `{0}`")]
    DuplicateAttribute(String),
    #[error("schema must declare exactly one date attribute, found {0}")]
    DateAttributeCount(usize),
    #[error("schema declares more than one integer-binned attribute")]
    MultipleBinned,
    #[error("schema declares more than one location attribute")]
    MultipleLocations,
    #[error("location attribute `{0}` must be categorical")]
    LocationNotCategorical(String),
    #[error("attribute `{0}` has an empty label domain")]
    EmptyDomain(String),
    #[error("attribute `{attribute}` lists label `{label}` more than once (or uses the reserved label)")]
    DuplicateLabel { attribute: String, label: String },
    #[error("alias `{alias}` of attribute `{attribute}` targets undeclared label `{target}`")]
    DanglingAlias {
        attribute: String,
        alias: String,
        target: String,
    },
    #[error("invalid bins for `{attribute}`: {reason}")]
    InvalidBins { attribute: String, reason: String },
    #[error("schema range end {end} precedes start {start}")]
    InvertedRange { start: NaiveDate, end: NaiveDate },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("reading schema: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing schema: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeKind {
    Date,
    Categorical {
        #[serde(default)]
        labels: Vec<String>,
        /// Raw spelling → declared label.
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        aliases: BTreeMap<String, String>,
        /// Open domains accept labels first seen in the data (e.g. municipalities).
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        open: bool,
    },
    IntegerBinned {
        /// Lower edges of the bins; the first must be 0.
        edges: Vec<u32>,
        /// Largest admissible raw value.
        max: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
    /// Marks the attribute whose labels have centroids (regions aggregate over it).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub location: bool,
}

impl AttributeSpec {
    pub fn categorical(name: &str, labels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: AttributeKind::Categorical {
                labels: labels.iter().map(|s| s.to_string()).collect(),
                aliases: BTreeMap::new(),
                open: false,
            },
            location: false,
        }
    }

    pub fn date(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: AttributeKind::Date,
            location: false,
        }
    }

    pub fn binned(name: &str, edges: &[u32], max: u32) -> Self {
        Self {
            name: name.to_string(),
            kind: AttributeKind::IntegerBinned {
                edges: edges.to_vec(),
                max,
            },
            location: false,
        }
    }

    pub fn as_location(mut self) -> Self {
        self.location = true;
        self
    }

    pub fn is_dimension(&self) -> bool {
        !matches!(self.kind, AttributeKind::Date)
    }
}

/// Half-open integer bins `[edges[i], edges[i+1])`, the last one open-ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeBins {
    edges: Vec<u32>,
    max: u32,
    labels: Vec<String>,
}

/// Bins used when a schema does not override them.
pub const DEFAULT_AGE_EDGES: [u32; 9] = [0, 5, 12, 15, 18, 26, 36, 46, 56];
pub const DEFAULT_MAX_AGE: u32 = 120;

impl AgeBins {
    pub fn new(edges: &[u32], max: u32) -> Result<Self, String> {
        if edges.is_empty() {
            return Err("no bin edges".into());
        }
        if edges[0] != 0 {
            return Err(format!("first edge is {}, bins must start at 0", edges[0]));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err("edges are not strictly increasing".into());
        }
        if *edges.last().unwrap() > max {
            return Err(format!("last edge exceeds the maximum value {max}"));
        }
        let labels = edges
            .iter()
            .enumerate()
            .map(|(i, &lo)| match edges.get(i + 1) {
                Some(&next) if next - 1 == lo => lo.to_string(),
                Some(&next) => format!("{lo}-{}", next - 1),
                None => format!("{lo}+"),
            })
            .collect();
        Ok(Self {
            edges: edges.to_vec(),
            max,
            labels,
        })
    }

    pub fn default_bins() -> Self {
        Self::new(&DEFAULT_AGE_EDGES, DEFAULT_MAX_AGE).expect("default bins are valid")
    }

    pub fn index_of(&self, value: u32) -> usize {
        self.edges.partition_point(|&e| e <= value) - 1
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn max(&self) -> u32 {
        self.max
    }
}

/// Label of the bin containing `raw_age`.
pub fn bin_age(raw_age: u32, bins: &AgeBins) -> &str {
    &bins.labels[bins.index_of(raw_age)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<AttributeSpec>,
    /// Declared dataset range; events outside it are rejected at ingestion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<NaiveDate>,
    #[serde(default = "default_date_format")]
    pub date_format: String,
}

fn default_date_format() -> String {
    ISO_DATE.to_string()
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSpec>) -> Result<Self, SchemaError> {
        let schema = Self {
            attributes,
            start: None,
            end: None,
            date_format: default_date_format(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_range(mut self, start: NaiveDate, end: NaiveDate) -> Result<Self, SchemaError> {
        if end < start {
            return Err(SchemaError::InvertedRange { start, end });
        }
        self.start = Some(start);
        self.end = Some(end);
        Ok(self)
    }

    /// The seven-column crime-report layout with default bins and vocabularies.
    pub fn default_reports() -> Self {
        let text = include_str!("../data/schema.json");
        let schema: Schema = serde_json::from_str(text).expect("bundled schema parses");
        schema.validate().expect("bundled schema is valid");
        schema
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Same schema reading and writing ISO dates.
    pub fn canonical(&self) -> Self {
        Self {
            date_format: default_date_format(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut names = BTreeSet::new();
        let (mut dates, mut binned, mut locations) = (0, 0, 0);
        for attr in &self.attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(SchemaError::DuplicateAttribute(attr.name.clone()));
            }
            match &attr.kind {
                AttributeKind::Date => dates += 1,
                AttributeKind::IntegerBinned { edges, max } => {
                    binned += 1;
                    AgeBins::new(edges, *max).map_err(|reason| SchemaError::InvalidBins {
                        attribute: attr.name.clone(),
                        reason,
                    })?;
                }
                AttributeKind::Categorical {
                    labels,
                    aliases,
                    open,
                } => {
                    if labels.is_empty() && !open {
                        return Err(SchemaError::EmptyDomain(attr.name.clone()));
                    }
                    let mut seen = BTreeSet::new();
                    for label in labels {
                        if label == UNKNOWN || !seen.insert(label.as_str()) {
                            return Err(SchemaError::DuplicateLabel {
                                attribute: attr.name.clone(),
                                label: label.clone(),
                            });
                        }
                    }
                    for (alias, target) in aliases {
                        if !seen.contains(target.as_str()) && target != UNKNOWN {
                            return Err(SchemaError::DanglingAlias {
                                attribute: attr.name.clone(),
                                alias: alias.clone(),
                                target: target.clone(),
                            });
                        }
                    }
                }
            }
            if attr.location {
                locations += 1;
                if !matches!(attr.kind, AttributeKind::Categorical { .. }) {
                    return Err(SchemaError::LocationNotCategorical(attr.name.clone()));
                }
            }
        }
        if dates != 1 {
            return Err(SchemaError::DateAttributeCount(dates));
        }
        if binned > 1 {
            return Err(SchemaError::MultipleBinned);
        }
        if locations > 1 {
            return Err(SchemaError::MultipleLocations);
        }
        if let (Some(start), Some(end)) = (self.start, self.end) {
            if end < start {
                return Err(SchemaError::InvertedRange { start, end });
            }
        }
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn date_attribute(&self) -> &AttributeSpec {
        self.attributes
            .iter()
            .find(|a| matches!(a.kind, AttributeKind::Date))
            .expect("validated schema has a date attribute")
    }

    pub fn binned_attribute(&self) -> Option<(&AttributeSpec, AgeBins)> {
        self.attributes.iter().find_map(|a| match &a.kind {
            AttributeKind::IntegerBinned { edges, max } => {
                Some((a, AgeBins::new(edges, *max).expect("validated bins")))
            }
            _ => None,
        })
    }

    pub fn location_attribute(&self) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.location)
    }

    /// Non-date attributes, in declaration order.
    pub fn dimensions(&self) -> impl Iterator<Item = &AttributeSpec> {
        self.attributes.iter().filter(|a| a.is_dimension())
    }

    /// Declared labels of a dimension followed by [`UNKNOWN`]. Open domains only
    /// list what the schema declares; the cube adds labels observed in data.
    pub fn domain(&self, name: &str) -> Result<Vec<String>, SchemaError> {
        let attr = self
            .attribute(name)
            .filter(|a| a.is_dimension())
            .ok_or_else(|| SchemaError::UnknownAttribute(name.to_string()))?;
        let mut labels = match &attr.kind {
            AttributeKind::Categorical { labels, .. } => labels.clone(),
            AttributeKind::IntegerBinned { edges, max } => {
                AgeBins::new(edges, *max).expect("validated").labels().to_vec()
            }
            AttributeKind::Date => unreachable!(),
        };
        labels.push(UNKNOWN.to_string());
        Ok(labels)
    }

    /// Maps a raw categorical string to its label. Blank → UNKNOWN; exact label,
    /// then alias, then case-insensitive label match; otherwise UNKNOWN, except
    /// in open domains where the trimmed raw value becomes the label.
    pub fn normalize_label(&self, attr: &AttributeSpec, raw: &str) -> String {
        let raw = raw.trim();
        if raw.is_empty() {
            return UNKNOWN.to_string();
        }
        let AttributeKind::Categorical {
            labels,
            aliases,
            open,
        } = &attr.kind
        else {
            return UNKNOWN.to_string();
        };
        if raw == UNKNOWN || labels.iter().any(|l| l == raw) {
            return raw.to_string();
        }
        if let Some(target) = aliases.get(raw) {
            return target.clone();
        }
        let folded = raw.to_lowercase();
        if let Some(target) = aliases
            .iter()
            .find(|(alias, _)| alias.to_lowercase() == folded)
            .map(|(_, t)| t)
        {
            return target.clone();
        }
        if let Some(label) = labels.iter().find(|l| l.to_lowercase() == folded) {
            return label.clone();
        }
        if *open {
            raw.to_string()
        } else {
            UNKNOWN.to_string()
        }
    }
}
