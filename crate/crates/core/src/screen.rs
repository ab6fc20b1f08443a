//! Massive screening of spatiotemporal conjunctive queries.
//!
//! A query fixes one to three attribute terms (a location term being a
//! [`RegionSet`]) and a window. Each query is scored with a 2×2 table: the
//! target stratum against its complement, over the window and over the
//! `reference_length` days immediately before it. For a region query the
//! complement is the same non-spatial stratum outside the region; otherwise it
//! is every event not matching the conjunction.
//!
//! Queries are grouped into strata (conjunction × region) that share one pair
//! of daily prefix series, so scoring a window costs four lookups plus a test.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{combinations, Conjunction, CountCube, DateWindow, QueryError, ResolvedConjunction};
use crate::exec;
use crate::geo::{AdmissibilityRule, RegionSet, DEFAULT_D_MAX_KM, DEFAULT_K_MAX};
use crate::stats::{self, ContingencyTable, TestKind, TestResult};
use crate::schema::UNKNOWN;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScreenError {
    #[error("invalid screening config: {0}")]
    Config(String),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("no admissible window ends on {frontier}; the earliest frontier is {earliest}")]
    EmptyScreen {
        frontier: NaiveDate,
        earliest: NaiveDate,
    },
    #[error("query is not admissible: {0}")]
    Inadmissible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreeningConfig {
    /// Attributes whose labels are varied over.
    pub attributes: Vec<String>,
    /// Attribute aggregated by region sets; defaults to the schema's location attribute.
    pub location_attribute: Option<String>,
    /// Terms present in every query with a fixed label set.
    pub pinned: BTreeMap<String, Vec<String>>,
    /// Upper bound on terms per query, pinned terms and region included.
    pub max_fixed_terms: usize,
    pub window_length: u32,
    pub stride: u32,
    pub reference_length: u32,
    pub k_max: usize,
    pub d_max_km: f64,
    pub region_rule: AdmissibilityRule,
    pub alpha: f64,
    pub prospective: bool,
    /// Do not vary over the reserved `UNKNOWN` label.
    pub skip_unknown: bool,
    /// Keep only reports passing Benjamini–Hochberg at `alpha`.
    pub benjamini_hochberg: bool,
    /// Score on the rayon pool when the `parallel` feature is enabled.
    pub parallel: bool,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            attributes: Vec::new(),
            location_attribute: None,
            pinned: BTreeMap::new(),
            max_fixed_terms: 3,
            window_length: 28,
            stride: 1,
            reference_length: 365,
            k_max: DEFAULT_K_MAX,
            d_max_km: DEFAULT_D_MAX_KM,
            region_rule: AdmissibilityRule::Seed,
            alpha: 0.05,
            prospective: false,
            skip_unknown: true,
            benjamini_hochberg: false,
            parallel: true,
        }
    }
}

impl ScreeningConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScreenError> {
        toml::from_str(text).map_err(|e| ScreenError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScreenError> {
        let fail = |m: String| Err(ScreenError::Config(m));
        if self.window_length == 0 {
            return fail("window_length must be at least 1".into());
        }
        if self.stride == 0 {
            return fail("stride must be at least 1".into());
        }
        if self.reference_length < self.window_length {
            return fail("reference_length must be at least window_length".into());
        }
        if !(1..=3).contains(&self.max_fixed_terms) {
            return fail("max_fixed_terms must be between 1 and 3".into());
        }
        if self.pinned.len() > self.max_fixed_terms {
            return fail("more pinned terms than max_fixed_terms".into());
        }
        if self.pinned.len() == self.max_fixed_terms
            && self.attributes.iter().any(|a| !self.pinned.contains_key(a))
        {
            return fail("pinned terms leave no room for a varying attribute".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail("alpha must lie in (0, 1]".into());
        }
        if self.k_max == 0 || self.d_max_km.is_nan() || self.d_max_km < 0.0 {
            return fail("k_max must be ≥ 1 and d_max_km ≥ 0".into());
        }
        if self.attributes.is_empty() && self.pinned.is_empty() {
            return fail("no attributes to screen".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScreeningQuery {
    /// Non-spatial terms.
    pub conjunction: Conjunction,
    pub region: Option<RegionSet>,
    pub window: DateWindow,
}

impl ScreeningQuery {
    pub fn term_count(&self) -> usize {
        self.conjunction.len() + usize::from(self.region.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub query: ScreeningQuery,
    pub observed: u64,
    pub expected: f64,
    pub p_value: f64,
    pub test_used: TestKind,
    pub table: ContingencyTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenOutcome {
    /// Flagged reports, most significant first.
    pub reports: Vec<AnomalyReport>,
    /// Number of queries scored.
    pub scored: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub window: DateWindow,
    pub observed: u64,
    pub expected: f64,
    pub p_value: f64,
    pub test_used: TestKind,
}

/// Strata sharing one non-spatial conjunction.
#[derive(Debug, Clone)]
struct Group {
    conjunction: Conjunction,
    resolved: ResolvedConjunction,
    /// Indices into `QueryPlan::regions`; `[None]` without a location term.
    regions: Vec<Option<usize>>,
    first_stratum: usize,
}

/// The enumerated query space: strata × admissible windows, in deterministic order.
#[derive(Debug, Clone)]
pub struct QueryPlan {
    groups: Vec<Group>,
    regions: Vec<RegionSet>,
    region_codes: Vec<Vec<u16>>,
    location_dim: Option<usize>,
    window_starts: Vec<usize>,
    window_length: u32,
    reference_length: u32,
    n_strata: usize,
}

impl QueryPlan {
    pub fn len(&self) -> usize {
        self.n_strata * self.window_starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn strata(&self) -> usize {
        self.n_strata
    }

    pub fn windows(&self) -> usize {
        self.window_starts.len()
    }

    /// Queries in enumeration order: strata outermost, windows innermost.
    pub fn iter<'a>(&'a self, cube: &'a CountCube) -> impl Iterator<Item = ScreeningQuery> + 'a {
        self.groups.iter().flat_map(move |g| {
            g.regions.iter().flat_map(move |r| {
                self.window_starts.iter().map(move |&s| ScreeningQuery {
                    conjunction: g.conjunction.clone(),
                    region: r.map(|i| self.regions[i].clone()),
                    window: DateWindow {
                        start: cube.date_of(s),
                        length: self.window_length,
                    },
                })
            })
        })
    }
}

fn location_of(cube: &CountCube, config: &ScreeningConfig) -> Option<String> {
    config
        .location_attribute
        .clone()
        .or_else(|| cube.schema().location_attribute().map(|a| a.name.clone()))
}

/// Enumerates every query of the screening: each choice of varying attributes
/// (sizes 1.. up to the term budget left by pinned terms), each label (or
/// region set, for the location attribute) of those attributes, and each
/// window at the configured stride whose full reference period lies inside
/// the calendar.
pub fn enumerate_queries(
    cube: &CountCube,
    config: &ScreeningConfig,
    regions: &[RegionSet],
) -> Result<QueryPlan, ScreenError> {
    config.validate()?;
    let starts = admissible_starts(cube, config.window_length, config.reference_length)
        .step_by(config.stride as usize)
        .collect();
    build_plan(cube, config, regions, starts)
}

fn admissible_starts(cube: &CountCube, window: u32, reference: u32) -> std::ops::Range<usize> {
    let first = reference as usize;
    let end = (cube.n_days() + 1).saturating_sub(window as usize);
    first..end.max(first)
}

fn build_plan(
    cube: &CountCube,
    config: &ScreeningConfig,
    regions: &[RegionSet],
    window_starts: Vec<usize>,
) -> Result<QueryPlan, ScreenError> {
    let location = location_of(cube, config);
    let location_dim = match &location {
        Some(name) => Some(
            cube.dim_index(name)
                .ok_or_else(|| QueryError::UnknownAttribute(name.clone()))?,
        ),
        None => None,
    };
    for attr in config.attributes.iter().chain(config.pinned.keys()) {
        if cube.dim_index(attr).is_none() {
            return Err(QueryError::UnknownAttribute(attr.clone()).into());
        }
    }
    if location.as_ref().is_some_and(|l| config.pinned.contains_key(l)) {
        return Err(ScreenError::Config(
            "the location attribute varies over region sets and cannot be pinned".into(),
        ));
    }
    let region_codes = match location_dim {
        Some(dim) => regions
            .iter()
            .map(|r| {
                r.members
                    .iter()
                    .map(|m| {
                        cube.label_code(dim, m).ok_or_else(|| {
                            ScreenError::from(QueryError::UnknownLabel {
                                attribute: cube.dim_name(dim).to_string(),
                                label: m.clone(),
                            })
                        })
                    })
                    .collect::<Result<Vec<u16>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };

    let varying: Vec<&String> = config
        .attributes
        .iter()
        .filter(|a| !config.pinned.contains_key(*a))
        .collect();
    let budget = config.max_fixed_terms - config.pinned.len();
    let sizes: Vec<usize> = if varying.is_empty() {
        vec![0]
    } else {
        (1..=budget.min(varying.len())).collect()
    };
    let indices: Vec<usize> = (0..varying.len()).collect();

    let mut base = Conjunction::new();
    for (attr, labels) in &config.pinned {
        base.insert(attr, labels.iter().cloned());
    }

    let mut groups = Vec::new();
    let mut n_strata = 0;
    for size in sizes {
        for subset in combinations(&indices, size) {
            let attrs: Vec<&String> = subset.iter().map(|&i| varying[i]).collect();
            let spatial = attrs.iter().any(|a| Some(*a) == location.as_ref());
            let plain: Vec<&String> = attrs
                .into_iter()
                .filter(|a| Some(*a) != location.as_ref())
                .collect();
            let domains: Vec<Vec<String>> = plain
                .iter()
                .map(|a| {
                    let mut d = cube.labels(a).expect("checked").to_vec();
                    if config.skip_unknown {
                        d.retain(|l| l != UNKNOWN);
                    }
                    d
                })
                .collect();
            if domains.iter().any(|d| d.is_empty()) {
                continue;
            }
            let region_choices: Vec<Option<usize>> = if spatial {
                (0..regions.len()).map(Some).collect()
            } else {
                vec![None]
            };
            if region_choices.is_empty() {
                continue;
            }
            let mut pick = vec![0usize; plain.len()];
            loop {
                let mut conjunction = base.clone();
                for (k, attr) in plain.iter().enumerate() {
                    conjunction.insert(attr, [domains[k][pick[k]].clone()]);
                }
                let resolved = cube.resolve(&conjunction)?;
                groups.push(Group {
                    conjunction,
                    resolved,
                    regions: region_choices.clone(),
                    first_stratum: n_strata,
                });
                n_strata += region_choices.len();
                let mut i = plain.len();
                let mut done = true;
                while i > 0 {
                    i -= 1;
                    pick[i] += 1;
                    if pick[i] < domains[i].len() {
                        done = false;
                        break;
                    }
                    pick[i] = 0;
                }
                if done {
                    break;
                }
            }
        }
    }

    Ok(QueryPlan {
        groups,
        regions: regions.to_vec(),
        region_codes,
        location_dim,
        window_starts,
        window_length: config.window_length,
        reference_length: config.reference_length,
        n_strata,
    })
}

/// Prefix sums of one daily series (`len = n_days + 1`).
fn prefix(daily: &[u32]) -> Vec<u64> {
    let mut out = Vec::with_capacity(daily.len() + 1);
    let mut acc = 0u64;
    out.push(0);
    for &n in daily {
        acc += u64::from(n);
        out.push(acc);
    }
    out
}

impl QueryPlan {
    fn population(&self, cube: &CountCube, group: &Group) -> Vec<u64> {
        let spatial = group.regions.iter().any(Option::is_some);
        if spatial {
            prefix(&cube.daily(&group.resolved))
        } else {
            prefix(&cube.daily(&cube.resolve(&Conjunction::new()).expect("empty conjunction")))
        }
    }

    fn target(&self, cube: &CountCube, group: &Group, region: Option<usize>) -> Vec<u64> {
        let daily = match (region, self.location_dim) {
            (Some(r), Some(dim)) => {
                let mut out = vec![0u32; cube.n_days()];
                for &code in &self.region_codes[r] {
                    cube.add_daily(&group.resolved.with_label(dim, code), &mut out);
                }
                out
            }
            _ => cube.daily(&group.resolved),
        };
        prefix(&daily)
    }
}

/// Table of the window starting at offset `start`, from prefix series.
fn window_table(
    target: &[u64],
    population: &[u64],
    start: usize,
    window_length: u32,
    reference_length: u32,
) -> ContingencyTable {
    let end = start + window_length as usize;
    let reference = start - reference_length as usize;
    let a = target[end] - target[start];
    let b = target[start] - target[reference];
    let current = population[end] - population[start];
    let past = population[start] - population[reference];
    ContingencyTable::new(a, b, current - a, past - b)
}

fn score_table(table: &ContingencyTable) -> TestResult {
    stats::test_table(table).unwrap_or(TestResult {
        p_value: 1.0,
        statistic: None,
        test_used: TestKind::Fisher,
        expected_a: 0.0,
    })
}

/// `a > (a+b)(a+c)/N`, in exact integer arithmetic.
fn exceeds_expectation(t: &ContingencyTable) -> bool {
    let n = u128::from(t.total());
    u128::from(t.a) * n > u128::from(t.a + t.b) * u128::from(t.a + t.c)
}

/// A flagged query before materialisation.
struct Hit {
    index: u64,
    stratum: usize,
    start: usize,
    table: ContingencyTable,
    result: TestResult,
}

fn screen_plan(cube: &CountCube, plan: &QueryPlan, config: &ScreeningConfig) -> ScreenOutcome {
    let n_windows = plan.window_starts.len();
    let alpha = config.alpha;
    // A cell at or below its expectation has p ≥ 1/2 under both tests (the
    // hypergeometric median is within one of the mean).
    let prune = alpha < 0.5;
    let per_group: Vec<Vec<Hit>> = exec::map(&plan.groups, config.parallel, |group| {
        if n_windows == 0 {
            return Vec::new();
        }
        let population = plan.population(cube, group);
        let slots: Vec<usize> = (0..group.regions.len()).collect();
        let per_region: Vec<Vec<Hit>> = exec::map(&slots, config.parallel, |&slot| {
                let target = plan.target(cube, group, group.regions[slot]);
                let stratum = group.first_stratum + slot;
                if *target.last().unwrap() == 0 {
                    return Vec::new();
                }
                let mut hits = Vec::new();
                for (k, &start) in plan.window_starts.iter().enumerate() {
                    let table = window_table(
                        &target,
                        &population,
                        start,
                        plan.window_length,
                        plan.reference_length,
                    );
                    if table.a == 0 || (prune && !exceeds_expectation(&table)) {
                        continue;
                    }
                    let result = score_table(&table);
                    if result.p_value <= alpha {
                        hits.push(Hit {
                            index: (stratum * n_windows + k) as u64,
                            stratum,
                            start,
                            table,
                            result,
                        });
                    }
                }
                hits
            });
        per_region.into_iter().flatten().collect()
    });
    let mut hits: Vec<Hit> = per_group.into_iter().flatten().collect();
    hits.sort_by(rank);
    let scored = plan.len() as u64;
    if config.benjamini_hochberg {
        let ps: Vec<f64> = hits.iter().map(|h| h.result.p_value).collect();
        hits.truncate(stats::benjamini_hochberg_cutoff(&ps, scored, alpha));
    }

    // Stratum index → (group, region) for materialisation.
    let mut owner = Vec::with_capacity(plan.n_strata);
    for (g, group) in plan.groups.iter().enumerate() {
        for r in &group.regions {
            owner.push((g, *r));
        }
    }
    let reports = hits
        .into_iter()
        .map(|h| {
            let (g, r) = owner[h.stratum];
            AnomalyReport {
                query: ScreeningQuery {
                    conjunction: plan.groups[g].conjunction.clone(),
                    region: r.map(|i| plan.regions[i].clone()),
                    window: DateWindow {
                        start: cube.date_of(h.start),
                        length: plan.window_length,
                    },
                },
                observed: h.table.a,
                expected: h.result.expected_a,
                p_value: h.result.p_value,
                test_used: h.result.test_used,
                table: h.table,
            }
        })
        .collect();
    ScreenOutcome { reports, scored }
}

/// Ascending p-value, then larger excess over expectation, then enumeration order.
fn rank(x: &Hit, y: &Hit) -> Ordering {
    x.result
        .p_value
        .total_cmp(&y.result.p_value)
        .then_with(|| {
            let ex = x.table.a as f64 - x.result.expected_a;
            let ey = y.table.a as f64 - y.result.expected_a;
            ey.total_cmp(&ex)
        })
        .then_with(|| x.index.cmp(&y.index))
}

/// Scores every enumerated query and returns those with `p ≤ alpha`, ranked.
pub fn massive_screen(
    cube: &CountCube,
    config: &ScreeningConfig,
    regions: &[RegionSet],
) -> Result<ScreenOutcome, ScreenError> {
    let plan = enumerate_queries(cube, config, regions)?;
    Ok(screen_plan(cube, &plan, config))
}

/// First day on which a window with a complete reference period can end.
pub fn earliest_frontier(cube: &CountCube, config: &ScreeningConfig) -> NaiveDate {
    cube.start()
        + Duration::days(i64::from(config.reference_length) + i64::from(config.window_length) - 1)
}

/// Screens only the windows ending on `frontier`; events after it are never read.
pub fn prospective_screen(
    cube: &CountCube,
    config: &ScreeningConfig,
    regions: &[RegionSet],
    frontier: NaiveDate,
) -> Result<ScreenOutcome, ScreenError> {
    config.validate()?;
    let end = cube.day_index(frontier).ok_or(QueryError::OutsideCalendar {
        start: frontier,
        length: 1,
    })?;
    let earliest = earliest_frontier(cube, config);
    let lead = (config.reference_length + config.window_length - 1) as usize;
    if end < lead {
        return Err(ScreenError::EmptyScreen { frontier, earliest });
    }
    let start = end + 1 - config.window_length as usize;
    let plan = build_plan(cube, config, regions, vec![start])?;
    Ok(screen_plan(cube, &plan, config))
}

/// Scores one query directly against the cube.
pub fn score_query(
    cube: &CountCube,
    q: &ScreeningQuery,
    config: &ScreeningConfig,
) -> Result<AnomalyReport, ScreenError> {
    if q.window.length != config.window_length {
        return Err(ScreenError::Inadmissible(format!(
            "window of {} days, config expects {}",
            q.window.length, config.window_length
        )));
    }
    let (lo, hi) = cube.window_span(&q.window)?;
    if lo < config.reference_length as usize {
        return Err(ScreenError::Inadmissible(
            "reference period starts before the calendar".into(),
        ));
    }
    let reference = lo - config.reference_length as usize;
    let (target, population) = query_conjunctions(cube, q, config)?;
    let target = cube.resolve(&target)?;
    let population = cube.resolve(&population)?;
    let a = cube.count_span(&target, lo, hi);
    let b = cube.count_span(&target, reference, lo);
    let c = cube.count_span(&population, lo, hi) - a;
    let d = cube.count_span(&population, reference, lo) - b;
    let table = ContingencyTable::new(a, b, c, d);
    let result = score_table(&table);
    Ok(AnomalyReport {
        query: q.clone(),
        observed: a,
        expected: result.expected_a,
        p_value: result.p_value,
        test_used: result.test_used,
        table,
    })
}

/// (target, population) conjunctions of a query: the population drops the
/// location term when a region is present and is everything otherwise.
fn query_conjunctions(
    cube: &CountCube,
    q: &ScreeningQuery,
    config: &ScreeningConfig,
) -> Result<(Conjunction, Conjunction), ScreenError> {
    match &q.region {
        Some(region) => {
            let location = location_of(cube, config)
                .ok_or_else(|| ScreenError::Config("no location attribute".into()))?;
            if q.conjunction.get(&location).is_some() {
                return Err(ScreenError::Inadmissible(
                    "conjunction repeats the location attribute".into(),
                ));
            }
            let target = q
                .conjunction
                .clone()
                .with(&location, region.members.iter().cloned());
            Ok((target, q.conjunction.clone()))
        }
        None => Ok((q.conjunction.clone(), Conjunction::new())),
    }
}

/// Observed counts and p-values of one stratum over every admissible window.
pub fn pvalue_timeline(
    cube: &CountCube,
    conjunction: &Conjunction,
    region: Option<&RegionSet>,
    config: &ScreeningConfig,
) -> Result<Vec<TimelinePoint>, ScreenError> {
    if config.window_length == 0 || config.stride == 0 {
        return Err(ScreenError::Config("window_length and stride must be ≥ 1".into()));
    }
    let probe = ScreeningQuery {
        conjunction: conjunction.clone(),
        region: region.cloned(),
        window: DateWindow {
            start: cube.start(),
            length: config.window_length,
        },
    };
    let (target, population) = query_conjunctions(cube, &probe, config)?;
    let target = prefix(&cube.daily(&cube.resolve(&target)?));
    let population = prefix(&cube.daily(&cube.resolve(&population)?));
    Ok(
        admissible_starts(cube, config.window_length, config.reference_length)
            .step_by(config.stride as usize)
            .map(|start| {
                let table = window_table(
                    &target,
                    &population,
                    start,
                    config.window_length,
                    config.reference_length,
                );
                let result = score_table(&table);
                TimelinePoint {
                    window: DateWindow {
                        start: cube.date_of(start),
                        length: config.window_length,
                    },
                    observed: table.a,
                    expected: result.expected_a,
                    p_value: result.p_value,
                    test_used: result.test_used,
                }
            })
            .collect(),
    )
}
