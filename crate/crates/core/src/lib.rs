//! Count-cube indexing and significance screening of timestamped categorical
//! event records.
//!
//! The pipeline: [`ingest`] parses records under a [`schema::Schema`],
//! [`cube::build_cube`] indexes them into daily count series, [`geo`]
//! enumerates multi-location aggregates, [`screen`] scores every
//! (conjunction, region, window) query with the tests in [`stats`], and
//! [`pivot`] builds row-conditioned frequency tables.

pub mod cube;
pub mod exec;
pub mod export;
pub mod geo;
pub mod ingest;
pub mod pivot;
pub mod schema;
pub mod screen;
pub mod stats;
pub mod synth;
pub mod watch;

pub use cube::{build_cube, Conjunction, CountCube, DateWindow, MaterializationPolicy};
pub use geo::{enumerate_region_sets, AdmissibilityRule, CentroidTable, RegionSet};
pub use ingest::{parse_events, summarize, DatasetSummary, EventRecord};
pub use schema::Schema;
pub use screen::{
    massive_screen, prospective_screen, pvalue_timeline, score_query, AnomalyReport,
    ScreeningConfig, ScreeningQuery,
};
