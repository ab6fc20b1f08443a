//! Immutable count index over event records.
//!
//! Every conjunction of single attribute labels maps to a daily count series
//! over a dense calendar. Series are stored either as prefix sums (dense
//! series) or as sorted event days (sparse series); both answer a window
//! count with two lookups. Conjunctions up to the policy's eager size are
//! materialized at build time, larger ones are computed from the shortest
//! label posting list on first use and cached.
//!
//! Value-set terms (several labels for one attribute) are answered by summing
//! the single-label series, which is exact because labels partition events.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::ops::Deref;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EventRecord;
use crate::schema::{AttributeKind, Schema, UNKNOWN};

const SNAPSHOT_MAGIC: &[u8; 8] = b"TCUBESNP";
const SNAPSHOT_VERSION: u32 = 1;

/// A series with fewer events than `n_days / SPARSE_RATIO` is kept sparse.
const SPARSE_RATIO: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{0}` is not indexed")]
    NotIndexed(String),
    #[error("unknown label `{label}` for attribute `{attribute}`")]
    UnknownLabel { attribute: String, label: String },
    #[error("term for `{0}` has no labels")]
    EmptyTerm(String),
    #[error("window length must be at least one day")]
    EmptyWindow,
    #[error("window {start}+{length}d lies outside the calendar")]
    OutsideCalendar { start: NaiveDate, length: u32 },
    #[error("stride must be at least one day")]
    ZeroStride,
}

#[derive(Debug, Error)]
pub enum CubeError {
    #[error("record dated {0} lies outside the calendar")]
    OutsideCalendar(NaiveDate),
    #[error("record has label `{label}` outside the domain of `{attribute}`")]
    UnknownLabel { attribute: String, label: String },
    #[error("materialization policy names unknown attribute `{0}`")]
    PolicyAttribute(String),
    #[error("not a cube snapshot")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot encoding: {0}")]
    Encoding(#[from] bincode::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Attribute name → admissible labels. A multi-label term aggregates labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Conjunction {
    terms: BTreeMap<String, BTreeSet<String>>,
}

impl Conjunction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with<I, S>(mut self, attribute: &str, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.insert(attribute, labels);
        self
    }

    pub fn term(self, attribute: &str, label: &str) -> Self {
        self.with(attribute, [label])
    }

    pub fn insert<I, S>(&mut self, attribute: &str, labels: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.terms.insert(
            attribute.to_string(),
            labels.into_iter().map(Into::into).collect(),
        );
    }

    pub fn remove(&mut self, attribute: &str) -> Option<BTreeSet<String>> {
        self.terms.remove(attribute)
    }

    pub fn terms(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.terms
    }

    pub fn get(&self, attribute: &str) -> Option<&BTreeSet<String>> {
        self.terms.get(attribute)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn matches(&self, record: &EventRecord) -> bool {
        self.terms.iter().all(|(attr, labels)| {
            labels.contains(record.value(attr).unwrap_or(UNKNOWN))
        })
    }
}

/// `length` consecutive days starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub length: u32,
}

impl DateWindow {
    pub fn new(start: NaiveDate, length: u32) -> Result<Self, QueryError> {
        if length == 0 {
            return Err(QueryError::EmptyWindow);
        }
        Ok(Self { start, length })
    }

    /// Last day inside the window.
    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(i64::from(self.length) - 1)
    }

    pub fn contains(&self, day: NaiveDate) -> bool {
        day >= self.start && day <= self.end()
    }

    pub fn overlaps(&self, other: &DateWindow) -> bool {
        self.start <= other.end() && other.start <= self.end()
    }
}

/// Which conjunctions are precomputed at build time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializationPolicy {
    /// Largest conjunction size built eagerly. Single labels are always built.
    pub eager_terms: usize,
    /// Attributes combined eagerly; `None` means every indexed attribute.
    pub attributes: Option<Vec<String>>,
}

impl Default for MaterializationPolicy {
    fn default() -> Self {
        Self {
            eager_terms: 2,
            attributes: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Series {
    /// `prefix[i]` = events on days `< i`; length `n_days + 1`.
    Dense { prefix: Vec<u32> },
    /// Event days, ascending, with repetition.
    Sparse { days: Vec<u32> },
}

static EMPTY_SERIES: Series = Series::Sparse { days: Vec::new() };

impl Series {
    fn from_days(days: Vec<u32>, n_days: usize) -> Self {
        debug_assert!(days.windows(2).all(|w| w[0] <= w[1]));
        if days.len() * SPARSE_RATIO < n_days {
            return Series::Sparse { days };
        }
        let mut prefix = vec![0u32; n_days + 1];
        for &d in &days {
            prefix[d as usize + 1] += 1;
        }
        for i in 1..prefix.len() {
            prefix[i] += prefix[i - 1];
        }
        Series::Dense { prefix }
    }

    /// Events on days in `[lo, hi)`.
    fn range(&self, lo: usize, hi: usize) -> u64 {
        match self {
            Series::Dense { prefix } => u64::from(prefix[hi] - prefix[lo]),
            Series::Sparse { days } => {
                let a = days.partition_point(|&d| (d as usize) < lo);
                let b = days.partition_point(|&d| (d as usize) < hi);
                (b - a) as u64
            }
        }
    }

    fn add_daily(&self, out: &mut [u32]) {
        match self {
            Series::Dense { prefix } => {
                for (slot, w) in out.iter_mut().zip(prefix.windows(2)) {
                    *slot += w[1] - w[0];
                }
            }
            Series::Sparse { days } => {
                for &d in days {
                    out[d as usize] += 1;
                }
            }
        }
    }
}

enum SeriesRef<'a> {
    Stored(&'a Series),
    Cached(Arc<Series>),
}

impl Deref for SeriesRef<'_> {
    type Target = Series;
    fn deref(&self) -> &Series {
        match self {
            SeriesRef::Stored(s) => s,
            SeriesRef::Cached(s) => s,
        }
    }
}

type Key = Vec<(u16, u16)>;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Dimension {
    name: String,
    labels: Vec<String>,
    index: HashMap<String, u16>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CubeData {
    #[serde(with = "schema_json")]
    schema: Schema,
    start: NaiveDate,
    n_days: usize,
    dims: Vec<Dimension>,
    /// Event day indices, ascending.
    event_days: Vec<u32>,
    /// Row-major label codes, `dims.len()` per event.
    event_codes: Vec<u16>,
    /// `postings[dim][label]` = ids of events carrying that label.
    postings: Vec<Vec<Vec<u32>>>,
    eager_dims: Vec<bool>,
    eager_terms: usize,
    series: HashMap<Key, Series>,
}

/// The schema's serde layout is self-describing, so it travels as JSON text.
mod schema_json {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::schema::Schema;

    pub fn serialize<S: Serializer>(schema: &Schema, s: S) -> Result<S::Ok, S::Error> {
        let text = serde_json::to_string(schema).map_err(serde::ser::Error::custom)?;
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Schema, D::Error> {
        let text = String::deserialize(d)?;
        Schema::from_json(&text).map_err(D::Error::custom)
    }
}

/// Conjunction resolved to dimension and label codes, sorted by dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResolvedConjunction {
    terms: Vec<(u16, Vec<u16>)>,
}

impl ResolvedConjunction {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds (or replaces) a single-label term.
    pub fn with_label(&self, dim: usize, label: u16) -> Self {
        let mut terms = self.terms.clone();
        let dim = dim as u16;
        match terms.binary_search_by_key(&dim, |t| t.0) {
            Ok(i) => terms[i].1 = vec![label],
            Err(i) => terms.insert(i, (dim, vec![label])),
        }
        Self { terms }
    }
}

pub struct CountCube {
    data: CubeData,
    lazy: RwLock<HashMap<Key, Arc<Series>>>,
    scanned: AtomicU64,
}

impl std::fmt::Debug for CountCube {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CountCube")
            .field("start", &self.data.start)
            .field("n_days", &self.data.n_days)
            .field("events", &self.data.event_days.len())
            .field("series", &self.data.series.len())
            .finish()
    }
}

/// Indexes `records` under `schema`. The calendar is the schema's declared
/// range, or the records' own span when the schema declares none.
pub fn build_cube(
    records: &[EventRecord],
    schema: &Schema,
    policy: &MaterializationPolicy,
) -> Result<CountCube, CubeError> {
    let (start, end) = match (schema.start, schema.end) {
        (Some(s), Some(e)) => (s, e),
        _ => {
            let lo = records.iter().map(|r| r.date).min();
            let hi = records.iter().map(|r| r.date).max();
            match (lo, hi) {
                (Some(lo), Some(hi)) => (schema.start.unwrap_or(lo), schema.end.unwrap_or(hi)),
                _ => {
                    let day = schema
                        .start
                        .or(schema.end)
                        .unwrap_or(NaiveDate::from_ymd_opt(1970, 1, 1).unwrap());
                    (day, day - Duration::days(1))
                }
            }
        }
    };
    let n_days = ((end - start).num_days() + 1).max(0) as usize;

    let mut dims: Vec<Dimension> = Vec::new();
    for attr in schema.dimensions() {
        let mut labels = schema.domain(&attr.name).expect("dimension");
        labels.pop(); // UNKNOWN goes last, after any observed labels
        if let AttributeKind::Categorical { open: true, .. } = attr.kind {
            let declared: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
            let observed: BTreeSet<&str> = records
                .iter()
                .filter_map(|r| r.value(&attr.name))
                .filter(|l| *l != UNKNOWN && !declared.contains(l))
                .collect();
            let extra: Vec<String> = observed.into_iter().map(str::to_string).collect();
            labels.extend(extra);
        }
        labels.push(UNKNOWN.to_string());
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u16))
            .collect();
        dims.push(Dimension {
            name: attr.name.clone(),
            labels,
            index,
        });
    }
    let n_dims = dims.len();

    let eager_dims: Vec<bool> = match &policy.attributes {
        None => vec![true; n_dims],
        Some(names) => {
            let mut flags = vec![false; n_dims];
            for name in names {
                let i = dims
                    .iter()
                    .position(|d| &d.name == name)
                    .ok_or_else(|| CubeError::PolicyAttribute(name.clone()))?;
                flags[i] = true;
            }
            flags
        }
    };

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].date);
    let mut event_days = Vec::with_capacity(records.len());
    let mut event_codes = Vec::with_capacity(records.len() * n_dims);
    for &i in &order {
        let record = &records[i];
        if record.date < start || record.date > end {
            return Err(CubeError::OutsideCalendar(record.date));
        }
        event_days.push((record.date - start).num_days() as u32);
        for dim in &dims {
            let label = record.value(&dim.name).unwrap_or(UNKNOWN);
            let code = dim.index.get(label).ok_or_else(|| CubeError::UnknownLabel {
                attribute: dim.name.clone(),
                label: label.to_string(),
            })?;
            event_codes.push(*code);
        }
    }

    let mut postings: Vec<Vec<Vec<u32>>> =
        dims.iter().map(|d| vec![Vec::new(); d.labels.len()]).collect();
    for (id, codes) in event_codes.chunks(n_dims.max(1)).enumerate().take(event_days.len()) {
        for (dim, &code) in codes.iter().enumerate() {
            postings[dim][code as usize].push(id as u32);
        }
    }

    let mut series = HashMap::new();
    series.insert(Vec::new(), Series::from_days(event_days.clone(), n_days));
    for (dim, lists) in postings.iter().enumerate() {
        for (label, ids) in lists.iter().enumerate() {
            if !ids.is_empty() {
                let days = ids.iter().map(|&id| event_days[id as usize]).collect();
                series.insert(
                    vec![(dim as u16, label as u16)],
                    Series::from_days(days, n_days),
                );
            }
        }
    }
    let eager: Vec<usize> = (0..n_dims).filter(|&d| eager_dims[d]).collect();
    for size in 2..=policy.eager_terms.min(eager.len()) {
        for combo in combinations(&eager, size) {
            let mut groups: HashMap<Key, Vec<u32>> = HashMap::new();
            for (id, &day) in event_days.iter().enumerate() {
                let codes = &event_codes[id * n_dims..(id + 1) * n_dims];
                let key: Key = combo.iter().map(|&d| (d as u16, codes[d])).collect();
                groups.entry(key).or_default().push(day);
            }
            for (key, days) in groups {
                series.insert(key, Series::from_days(days, n_days));
            }
        }
    }

    Ok(CountCube {
        data: CubeData {
            schema: schema.clone(),
            start,
            n_days,
            dims,
            event_days,
            event_codes,
            postings,
            eager_dims,
            eager_terms: policy.eager_terms,
            series,
        },
        lazy: RwLock::new(HashMap::new()),
        scanned: AtomicU64::new(0),
    })
}

pub(crate) fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn go(items: &[usize], k: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in from..items.len() {
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, k, 0, &mut Vec::new(), &mut out);
    out
}

impl CountCube {
    pub fn schema(&self) -> &Schema {
        &self.data.schema
    }

    pub fn total_events(&self) -> u64 {
        self.data.event_days.len() as u64
    }

    pub fn start(&self) -> NaiveDate {
        self.data.start
    }

    /// Last calendar day (precedes `start` for an empty calendar).
    pub fn end(&self) -> NaiveDate {
        self.data.start + Duration::days(self.data.n_days as i64 - 1)
    }

    pub fn n_days(&self) -> usize {
        self.data.n_days
    }

    pub fn date_of(&self, day: usize) -> NaiveDate {
        self.data.start + Duration::days(day as i64)
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.data.start).num_days();
        (offset >= 0 && (offset as usize) < self.data.n_days).then_some(offset as usize)
    }

    /// Indexed attribute names, in schema order.
    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.data.dims.iter().map(|d| d.name.as_str())
    }

    pub fn dim_index(&self, attribute: &str) -> Option<usize> {
        self.data.dims.iter().position(|d| d.name == attribute)
    }

    /// Domain of an indexed attribute, `UNKNOWN` last.
    pub fn labels(&self, attribute: &str) -> Option<&[String]> {
        self.dim_index(attribute).map(|i| self.dim_labels(i))
    }

    pub fn dim_labels(&self, dim: usize) -> &[String] {
        &self.data.dims[dim].labels
    }

    pub fn dim_name(&self, dim: usize) -> &str {
        &self.data.dims[dim].name
    }

    pub fn label_code(&self, dim: usize, label: &str) -> Option<u16> {
        self.data.dims[dim].index.get(label).copied()
    }

    /// Events read while filling the lazy cache, over the cube's lifetime.
    pub fn events_scanned(&self) -> u64 {
        self.scanned.load(Ordering::Relaxed)
    }

    pub fn resolve(&self, q: &Conjunction) -> Result<ResolvedConjunction, QueryError> {
        let mut terms = Vec::with_capacity(q.len());
        for (attr, labels) in q.terms() {
            let dim = match self.dim_index(attr) {
                Some(d) => d,
                None if self.data.schema.attribute(attr).is_some() => {
                    return Err(QueryError::NotIndexed(attr.clone()))
                }
                None => return Err(QueryError::UnknownAttribute(attr.clone())),
            };
            if labels.is_empty() {
                return Err(QueryError::EmptyTerm(attr.clone()));
            }
            let codes = labels
                .iter()
                .map(|l| {
                    self.label_code(dim, l).ok_or_else(|| QueryError::UnknownLabel {
                        attribute: attr.clone(),
                        label: l.clone(),
                    })
                })
                .collect::<Result<Vec<u16>, _>>()?;
            terms.push((dim as u16, codes));
        }
        terms.sort_by_key(|t| t.0);
        Ok(ResolvedConjunction { terms })
    }

    /// Calendar offsets `[lo, hi)` covered by `w`.
    pub fn window_span(&self, w: &DateWindow) -> Result<(usize, usize), QueryError> {
        if w.length == 0 {
            return Err(QueryError::EmptyWindow);
        }
        let outside = QueryError::OutsideCalendar {
            start: w.start,
            length: w.length,
        };
        let lo = self.day_index(w.start).ok_or(outside.clone())?;
        let hi = lo + w.length as usize;
        if hi > self.data.n_days {
            return Err(outside);
        }
        Ok((lo, hi))
    }

    /// Events matching every term of `q` dated inside `w`.
    pub fn count(&self, q: &Conjunction, w: &DateWindow) -> Result<u64, QueryError> {
        let resolved = self.resolve(q)?;
        let (lo, hi) = self.window_span(w)?;
        Ok(self.count_span(&resolved, lo, hi))
    }

    /// Counts over calendar offsets `[lo, hi)`; callers guarantee bounds.
    pub fn count_span(&self, q: &ResolvedConjunction, lo: usize, hi: usize) -> u64 {
        let mut total = 0;
        self.for_each_key(q, |key| total += self.series(key).range(lo, hi));
        total
    }

    /// Adds the per-day counts of `q` into `out` (length `n_days`).
    pub fn add_daily(&self, q: &ResolvedConjunction, out: &mut [u32]) {
        assert_eq!(out.len(), self.data.n_days);
        self.for_each_key(q, |key| self.series(key).add_daily(out));
    }

    /// Per-day counts of `q` over the whole calendar.
    pub fn daily(&self, q: &ResolvedConjunction) -> Vec<u32> {
        let mut out = vec![0; self.data.n_days];
        self.add_daily(q, &mut out);
        out
    }

    /// Counts of `q` over consecutive windows of `window_length` days taken every
    /// `stride` days from the calendar start.
    pub fn timeline(
        &self,
        q: &Conjunction,
        window_length: u32,
        stride: u32,
    ) -> Result<Vec<(DateWindow, u64)>, QueryError> {
        if stride == 0 {
            return Err(QueryError::ZeroStride);
        }
        if window_length == 0 {
            return Err(QueryError::EmptyWindow);
        }
        let resolved = self.resolve(q)?;
        let mut prefix = Vec::with_capacity(self.data.n_days + 1);
        prefix.push(0u64);
        for n in self.daily(&resolved) {
            prefix.push(prefix.last().unwrap() + u64::from(n));
        }
        let len = window_length as usize;
        Ok((0..self.data.n_days.saturating_sub(len - 1))
            .step_by(stride as usize)
            .map(|lo| {
                let w = DateWindow {
                    start: self.date_of(lo),
                    length: window_length,
                };
                (w, prefix[lo + len] - prefix[lo])
            })
            .collect())
    }

    fn for_each_key(&self, q: &ResolvedConjunction, mut f: impl FnMut(&[(u16, u16)])) {
        let mut pick = vec![0usize; q.terms.len()];
        let mut key: Key = q.terms.iter().map(|(d, ls)| (*d, ls[0])).collect();
        loop {
            f(&key);
            // Odometer over the label sets.
            let mut i = q.terms.len();
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                pick[i] += 1;
                if pick[i] < q.terms[i].1.len() {
                    key[i].1 = q.terms[i].1[pick[i]];
                    break;
                }
                pick[i] = 0;
                key[i].1 = q.terms[i].1[0];
            }
        }
    }

    fn is_eager(&self, key: &[(u16, u16)]) -> bool {
        key.len() <= 1
            || (key.len() <= self.data.eager_terms
                && key.iter().all(|(d, _)| self.data.eager_dims[*d as usize]))
    }

    fn series(&self, key: &[(u16, u16)]) -> SeriesRef<'_> {
        if self.is_eager(key) {
            return SeriesRef::Stored(self.data.series.get(key).unwrap_or(&EMPTY_SERIES));
        }
        if let Some(s) = self.lazy.read().expect("cache lock").get(key) {
            return SeriesRef::Cached(Arc::clone(s));
        }
        // Concurrent fills of the same key compute identical series.
        let computed = Arc::new(self.filter_series(key));
        let mut cache = self.lazy.write().expect("cache lock");
        let entry = cache.entry(key.to_vec()).or_insert(computed);
        SeriesRef::Cached(Arc::clone(entry))
    }

    fn filter_series(&self, key: &[(u16, u16)]) -> Series {
        let n_dims = self.data.dims.len();
        let (pivot, _) = key
            .iter()
            .enumerate()
            .min_by_key(|(_, (d, l))| self.data.postings[*d as usize][*l as usize].len())
            .expect("non-empty key");
        let (pd, pl) = key[pivot];
        let ids = &self.data.postings[pd as usize][pl as usize];
        self.scanned.fetch_add(ids.len() as u64, Ordering::Relaxed);
        let days = ids
            .iter()
            .filter(|&&id| {
                let codes = &self.data.event_codes[id as usize * n_dims..];
                key.iter().all(|(d, l)| codes[*d as usize] == *l)
            })
            .map(|&id| self.data.event_days[id as usize])
            .collect();
        Series::from_days(days, self.data.n_days)
    }

    /// Writes a versioned binary snapshot; the lazy cache is not persisted.
    pub fn save<W: Write>(&self, mut sink: W) -> Result<(), CubeError> {
        sink.write_all(SNAPSHOT_MAGIC)?;
        sink.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        bincode::serialize_into(&mut sink, &self.data)?;
        sink.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut source: R) -> Result<Self, CubeError> {
        let mut magic = [0u8; 8];
        source.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(CubeError::BadMagic);
        }
        let mut version = [0u8; 4];
        source.read_exact(&mut version)?;
        let version = u32::from_le_bytes(version);
        if version != SNAPSHOT_VERSION {
            return Err(CubeError::Version(version));
        }
        let data: CubeData = bincode::deserialize_from(source)?;
        Ok(Self {
            data,
            lazy: RwLock::new(HashMap::new()),
            scanned: AtomicU64::new(0),
        })
    }
}
