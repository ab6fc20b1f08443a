#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use tcube::cube::{Conjunction, DateWindow};
use tcube::geo::{LatLon, RegionSet};
use tcube::ingest::EventRecord;
use tcube::schema::{AttributeSpec, Schema};
use tcube::stats::ContingencyTable;
use tcube::synth::{generate_synthetic, Injection, Labels, SyntheticConfig};
use tcube::CentroidTable;

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Four places, three kinds, three colours.
pub fn small_schema(start: NaiveDate, end: NaiveDate) -> Schema {
    Schema::new(vec![
        AttributeSpec::date("date"),
        AttributeSpec::categorical("place", &["P1", "P2", "P3", "P4"]).as_location(),
        AttributeSpec::categorical("kind", &["k1", "k2", "k3"]),
        AttributeSpec::categorical("colour", &["red", "green", "blue"]),
    ])
    .unwrap()
    .with_range(start, end)
    .unwrap()
}

pub fn small_centroids() -> CentroidTable {
    CentroidTable::new([
        ("P1", LatLon::new(0.0, 0.0)),
        ("P2", LatLon::new(0.0, 0.3)),
        ("P3", LatLon::new(0.0, 0.6)),
        ("P4", LatLon::new(0.0, 5.0)),
    ])
    .unwrap()
}

/// Uniformly random events with every attribute label drawn from the schema
/// domain (the reserved unknown label included).
pub fn random_events<R: Rng>(rng: &mut R, schema: &Schema, n: usize) -> Vec<EventRecord> {
    let start = schema.start.unwrap();
    let days = (schema.end.unwrap() - start).num_days() + 1;
    let dims: Vec<(String, Vec<String>)> = schema
        .dimensions()
        .map(|a| (a.name.clone(), schema.domain(&a.name).unwrap()))
        .collect();
    (0..n)
        .map(|_| EventRecord {
            date: start + Duration::days(rng.gen_range(0..days)),
            values: dims
                .iter()
                .map(|(name, domain)| (name.clone(), domain.choose(rng).unwrap().clone()))
                .collect(),
            raw_age: None,
        })
        .collect()
}

/// Random conjunction of 1..=max_terms terms, each with 1..=2 labels.
pub fn random_conjunction<R: Rng>(rng: &mut R, schema: &Schema, max_terms: usize) -> Conjunction {
    let mut dims: Vec<&AttributeSpec> = schema.dimensions().collect();
    dims.shuffle(rng);
    let k = rng.gen_range(1..=max_terms.min(dims.len()));
    let mut q = Conjunction::new();
    for attr in &dims[..k] {
        let domain = schema.domain(&attr.name).unwrap();
        let n = rng.gen_range(1..=2usize.min(domain.len()));
        let labels: Vec<String> = domain.choose_multiple(rng, n).cloned().collect();
        q.insert(&attr.name, labels);
    }
    q
}

pub fn random_window<R: Rng>(rng: &mut R, schema: &Schema) -> DateWindow {
    let start = schema.start.unwrap();
    let days = (schema.end.unwrap() - start).num_days() + 1;
    let lo = rng.gen_range(0..days);
    let len = rng.gen_range(1..=days - lo);
    DateWindow::new(start + Duration::days(lo), len as u32).unwrap()
}

/// Linear-scan count of events matching `q` inside `w`.
pub fn scan_count(records: &[EventRecord], q: &Conjunction, w: &DateWindow) -> u64 {
    records
        .iter()
        .filter(|r| w.contains(r.date) && q.matches(r))
        .count() as u64
}

/// Table of a screening query by linear scan: target rows match the
/// conjunction (and region), complement rows match the population.
pub fn scan_table(
    records: &[EventRecord],
    conjunction: &Conjunction,
    region: Option<(&str, &RegionSet)>,
    window: &DateWindow,
    reference_length: u32,
) -> ContingencyTable {
    let reference = DateWindow {
        start: window.start - Duration::days(i64::from(reference_length)),
        length: reference_length,
    };
    let (mut a, mut b, mut c, mut d) = (0, 0, 0, 0);
    for r in records {
        let current = window.contains(r.date);
        if !current && !reference.contains(r.date) {
            continue;
        }
        let in_population = match region {
            Some(_) => conjunction.matches(r),
            None => true,
        };
        if !in_population {
            continue;
        }
        let target = match region {
            Some((attr, set)) => conjunction.matches(r) && set.contains(r.value(attr).unwrap()),
            None => conjunction.matches(r),
        };
        match (target, current) {
            (true, true) => a += 1,
            (true, false) => b += 1,
            (false, true) => c += 1,
            (false, false) => d += 1,
        }
    }
    ContingencyTable::new(a, b, c, d)
}

pub fn labels(values: &[&str]) -> Labels {
    Labels::Many(values.iter().map(|s| s.to_string()).collect())
}

/// Uniform-rate synthetic data over `attributes`, optionally with one
/// injected cluster.
pub fn synthetic(
    schema: &Schema,
    attributes: &[&str],
    rate: f64,
    injections: Vec<Injection>,
    seed: u64,
) -> Vec<EventRecord> {
    let config = SyntheticConfig {
        start: schema.start.unwrap(),
        end: schema.end.unwrap(),
        seed,
        attributes: attributes.iter().map(|s| s.to_string()).collect(),
        uniform_rate: rate,
        rates: Vec::new(),
        injections,
        skip_unknown: true,
    };
    generate_synthetic(schema, &config, seed).unwrap()
}

pub fn injection(terms: &[(&str, &[&str])], start: NaiveDate, days: i64, multiplier: f64) -> Injection {
    Injection {
        terms: terms
            .iter()
            .map(|(k, v)| (k.to_string(), labels(v)))
            .collect::<BTreeMap<_, _>>(),
        start,
        end: start + Duration::days(days - 1),
        multiplier,
    }
}

/// Pascal's triangle up to `n`, exact.
pub fn binomial_table(n: usize) -> Vec<Vec<u128>> {
    let mut c = vec![vec![0u128; n + 1]; n + 1];
    for i in 0..=n {
        c[i][0] = 1;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1] + c[i - 1][j];
        }
    }
    c
}

/// P(X ≥ a) from exact integer hypergeometric weights.
pub fn exact_upper_tail(c: &[Vec<u128>], t: &ContingencyTable) -> f64 {
    let (a, b, cc, d) = (t.a as usize, t.b as usize, t.c as usize, t.d as usize);
    let n = a + b + cc + d;
    let row = a + b;
    let col = a + cc;
    let weight = |x: usize| -> u128 {
        if x > row || x > col || col - x > n - row {
            0
        } else {
            c[row][x] * c[n - row][col - x]
        }
    };
    let upper: u128 = (a..=row.min(col)).map(weight).sum();
    upper as f64 / c[n][col] as f64
}

pub fn all_tables(max_total: u64) -> impl Iterator<Item = ContingencyTable> {
    (0..=max_total).flat_map(move |n| {
        (0..=n).flat_map(move |a| {
            (0..=n - a).flat_map(move |b| {
                (0..=n - a - b).map(move |c| ContingencyTable::new(a, b, c, n - a - b - c))
            })
        })
    })
}
