//! Prospective monitoring over an append-only event stream.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::cube::{build_cube, MaterializationPolicy};
use crate::geo::RegionSet;
use crate::ingest::EventRecord;
use crate::schema::Schema;
use crate::screen::{earliest_frontier, prospective_screen, AnomalyReport, ScreenError, ScreeningConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub frontier: NaiveDate,
    pub report: AnomalyReport,
}

/// Holds the event history and screens every newly reached frontier day.
///
/// The frontier is the latest event date seen. Each batch that moves it
/// forward triggers a prospective screen for every day passed; events dated
/// at or before an already screened day only affect later frontiers.
pub struct Watcher {
    schema: Schema,
    config: ScreeningConfig,
    regions: Vec<RegionSet>,
    policy: MaterializationPolicy,
    records: Vec<EventRecord>,
    start: Option<NaiveDate>,
    frontier: Option<NaiveDate>,
}

impl Watcher {
    pub fn new(
        schema: Schema,
        config: ScreeningConfig,
        regions: Vec<RegionSet>,
        history: Vec<EventRecord>,
    ) -> Result<Self, ScreenError> {
        config.validate()?;
        let start = schema.start.or_else(|| history.iter().map(|r| r.date).min());
        let frontier = history.iter().map(|r| r.date).max();
        Ok(Self {
            schema,
            config,
            regions,
            policy: MaterializationPolicy::default(),
            records: history,
            start,
            frontier,
        })
    }

    pub fn frontier(&self) -> Option<NaiveDate> {
        self.frontier
    }

    /// Appends a batch; returns the alerts of every frontier day it reaches.
    pub fn push_batch(&mut self, batch: Vec<EventRecord>) -> Result<Vec<Alert>, ScreenError> {
        let Some(newest) = batch.iter().map(|r| r.date).max() else {
            return Ok(Vec::new());
        };
        let oldest = batch.iter().map(|r| r.date).min().expect("non-empty");
        self.records.extend(batch);
        let start = *self.start.get_or_insert(oldest);
        if oldest < start {
            return Err(ScreenError::Inadmissible(format!(
                "event dated {oldest} precedes the calendar start {start}"
            )));
        }
        let previous = self.frontier;
        if previous.is_some_and(|f| newest <= f) {
            return Ok(Vec::new());
        }
        self.frontier = Some(newest);

        let schema = self
            .schema
            .clone()
            .with_range(start, newest)
            .map_err(|e| ScreenError::Config(e.to_string()))?;
        let cube = build_cube(&self.records, &schema, &self.policy)
            .map_err(|e| ScreenError::Config(e.to_string()))?;
        let earliest = earliest_frontier(&cube, &self.config);
        let mut day = previous.map_or(start, |f| f + Duration::days(1)).max(earliest);
        let mut alerts = Vec::new();
        while day <= newest {
            let outcome = prospective_screen(&cube, &self.config, &self.regions, day)?;
            alerts.extend(outcome.reports.into_iter().map(|report| Alert {
                frontier: day,
                report,
            }));
            day += Duration::days(1);
        }
        Ok(alerts)
    }
}
