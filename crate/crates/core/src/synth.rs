//! Seeded synthetic event generator with injectable rate clusters.
//!
//! Every cell of the cross product of the configured stratum attributes gets
//! an independent Poisson count per day. Cells matching an injection's terms
//! have their rate multiplied inside the injection's date range. Attributes of
//! the schema outside the stratum list are recorded as `UNKNOWN`; a binned
//! stratum attribute draws its raw value uniformly within the bin.
//!
//! Config file (TOML):
//!
//! ```toml
//! start = "2013-01-01"
//! end = "2014-12-31"
//! seed = 7
//! attributes = ["state", "age", "perpetrator"]
//! uniform_rate = 0.002          # events per cell per day
//!
//! [[rates]]                      # optional overrides, last match wins
//! terms = { perpetrator = "boyfriend" }
//! rate = 0.01
//!
//! [[injections]]
//! terms = { state = ["SAN MIGUEL", "MORAZAN"], age = ["12-14"] }
//! start = "2014-03-01"
//! end = "2014-03-28"
//! multiplier = 3.0
//! ```

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EventRecord;
use crate::schema::{AttributeKind, Schema, UNKNOWN};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("rate {0} is negative or not finite")]
    InvalidRate(f64),
    #[error("injection multiplier {0} is negative or not finite")]
    InvalidMultiplier(f64),
    #[error("date range {start}..{end} is inverted or outside the configured range")]
    InvalidRange { start: NaiveDate, end: NaiveDate },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{0}` cannot be a stratum attribute")]
    NotCategorical(String),
    #[error("unknown label `{label}` for `{attribute}`")]
    UnknownLabel { attribute: String, label: String },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
}

/// One label or several.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Labels {
    One(String),
    Many(Vec<String>),
}

impl Labels {
    pub fn as_slice(&self) -> &[String] {
        match self {
            Labels::One(s) => std::slice::from_ref(s),
            Labels::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRate {
    pub terms: BTreeMap<String, Labels>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub terms: BTreeMap<String, Labels>,
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
    #[serde(default)]
    pub seed: u64,
    pub attributes: Vec<String>,
    #[serde(default)]
    pub uniform_rate: f64,
    #[serde(default)]
    pub rates: Vec<StratumRate>,
    #[serde(default)]
    pub injections: Vec<Injection>,
    /// Leave `UNKNOWN` out of stratum label domains.
    #[serde(default = "default_true")]
    pub skip_unknown: bool,
}

fn default_true() -> bool {
    true
}

impl SyntheticConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }
}

struct Cell {
    labels: Vec<usize>,
    rate: f64,
    /// Injection indices whose terms match the cell.
    injections: Vec<usize>,
}

/// Generates a dataset; identical `(schema, config, seed)` give identical output.
pub fn generate_synthetic(
    schema: &Schema,
    config: &SyntheticConfig,
    seed: u64,
) -> Result<Vec<EventRecord>, ConfigError> {
    if config.end < config.start {
        return Err(ConfigError::InvalidRange {
            start: config.start,
            end: config.end,
        });
    }
    check_rate(config.uniform_rate)?;
    let mut domains: Vec<Vec<String>> = Vec::new();
    for name in &config.attributes {
        let attr = schema
            .attribute(name)
            .ok_or_else(|| ConfigError::UnknownAttribute(name.clone()))?;
        if !attr.is_dimension() {
            return Err(ConfigError::NotCategorical(name.clone()));
        }
        let mut domain = schema.domain(name).expect("dimension");
        if config.skip_unknown {
            domain.retain(|l| l != UNKNOWN);
        }
        domains.push(domain);
    }
    let term_matcher = |terms: &BTreeMap<String, Labels>| -> Result<Vec<(usize, Vec<usize>)>, ConfigError> {
        terms
            .iter()
            .map(|(attr, labels)| {
                let i = config
                    .attributes
                    .iter()
                    .position(|a| a == attr)
                    .ok_or_else(|| ConfigError::UnknownAttribute(attr.clone()))?;
                let codes = labels
                    .as_slice()
                    .iter()
                    .map(|l| {
                        domains[i].iter().position(|d| d == l).ok_or_else(|| {
                            ConfigError::UnknownLabel {
                                attribute: attr.clone(),
                                label: l.clone(),
                            }
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((i, codes))
            })
            .collect()
    };
    let mut overrides = Vec::new();
    for r in &config.rates {
        check_rate(r.rate)?;
        overrides.push((term_matcher(&r.terms)?, r.rate));
    }
    let mut injections = Vec::new();
    for inj in &config.injections {
        if !inj.multiplier.is_finite() || inj.multiplier < 0.0 {
            return Err(ConfigError::InvalidMultiplier(inj.multiplier));
        }
        if inj.end < inj.start || inj.start < config.start || inj.end > config.end {
            return Err(ConfigError::InvalidRange {
                start: inj.start,
                end: inj.end,
            });
        }
        injections.push(term_matcher(&inj.terms)?);
    }
    let matches = |terms: &[(usize, Vec<usize>)], labels: &[usize]| {
        terms.iter().all(|(i, codes)| codes.contains(&labels[*i]))
    };

    let mut cells = Vec::new();
    let mut labels = vec![0usize; domains.len()];
    if domains.iter().all(|d| !d.is_empty()) {
        loop {
            let rate = overrides
                .iter()
                .rev()
                .find(|(terms, _)| matches(terms, &labels))
                .map_or(config.uniform_rate, |(_, r)| *r);
            let hits = (0..injections.len())
                .filter(|&k| matches(&injections[k], &labels))
                .collect();
            cells.push(Cell {
                labels: labels.clone(),
                rate,
                injections: hits,
            });
            let mut i = domains.len();
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                labels[i] += 1;
                if labels[i] < domains[i].len() {
                    break;
                }
                labels[i] = 0;
            }
            if labels.iter().all(|&l| l == 0) {
                break;
            }
        }
    }

    let bins = schema.binned_attribute();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let n_days = (config.end - config.start).num_days() + 1;
    for offset in 0..n_days {
        let date = config.start + Duration::days(offset);
        for cell in &cells {
            let mut rate = cell.rate;
            for &k in &cell.injections {
                let inj = &config.injections[k];
                if date >= inj.start && date <= inj.end {
                    rate *= inj.multiplier;
                }
            }
            if rate <= 0.0 {
                continue;
            }
            let n = Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64;
            for _ in 0..n {
                let mut values: BTreeMap<String, String> = schema
                    .dimensions()
                    .map(|a| (a.name.clone(), UNKNOWN.to_string()))
                    .collect();
                let mut raw_age = None;
                for (i, name) in config.attributes.iter().enumerate() {
                    let label = &domains[i][cell.labels[i]];
                    values.insert(name.clone(), label.clone());
                    if let Some((attr, bins)) = &bins {
                        if &attr.name == name && label != UNKNOWN {
                            raw_age = Some(draw_in_bin(&mut rng, bins, label, &attr.kind));
                        }
                    }
                }
                records.push(EventRecord {
                    date,
                    values,
                    raw_age,
                });
            }
        }
    }
    Ok(records)
}

fn check_rate(rate: f64) -> Result<(), ConfigError> {
    if rate >= 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::InvalidRate(rate))
    }
}

fn draw_in_bin(
    rng: &mut ChaCha8Rng,
    bins: &crate::schema::AgeBins,
    label: &str,
    kind: &AttributeKind,
) -> u32 {
    let AttributeKind::IntegerBinned { edges, max } = kind else {
        unreachable!()
    };
    let i = bins.labels().iter().position(|l| l == label).expect("bin label");
    let lo = edges[i];
    let hi = edges.get(i + 1).map_or(*max, |next| next - 1);
    rng.gen_range(lo..=hi)
}
