//! Loading schemas, event files, cubes and centroid tables from disk.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use anyhow::{bail, Context, Result};
use tcube::cube::{build_cube, CountCube, MaterializationPolicy};
use tcube::geo::{enumerate_region_sets, CentroidTable, RegionSet};
use tcube::ingest::{parse_events, EventRecord, RowError};
use tcube::schema::UNKNOWN;
use tcube::screen::ScreeningConfig;
use tcube::Schema;

pub fn load_schema(path: Option<&Path>) -> Result<Schema> {
    match path {
        Some(p) => Schema::load(p).with_context(|| format!("loading schema {}", p.display())),
        None => Ok(Schema::default_reports()),
    }
}

pub fn load_centroids(path: Option<&Path>) -> Result<CentroidTable> {
    match path {
        Some(p) => CentroidTable::load(p).with_context(|| format!("loading centroids {}", p.display())),
        None => Ok(CentroidTable::el_salvador()),
    }
}

/// Reads an event file; malformed rows are returned, not fatal.
pub fn read_events(path: &Path, schema: &Schema) -> Result<(Vec<EventRecord>, Vec<RowError>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let out = parse_events(BufReader::new(file), schema)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok((out.records, out.errors))
}

/// Event file in the canonical format; row errors are reported on stderr.
pub fn read_event_file(path: &Path, schema: &Schema) -> Result<Vec<EventRecord>> {
    let (records, errors) = read_events(path, &schema.canonical())?;
    warn_rows(path, &errors);
    Ok(records)
}

pub fn warn_rows(path: &Path, errors: &[RowError]) {
    for e in errors.iter().take(10) {
        eprintln!("{}:{}: {}", path.display(), e.line, e.cause);
    }
    if errors.len() > 10 {
        eprintln!("{}: {} more malformed rows", path.display(), errors.len() - 10);
    }
}

/// Builds a cube whose calendar is the schema's declared range, or the
/// records' own span when the schema declares none.
pub fn cube_for(schema: &Schema, records: &[EventRecord]) -> Result<CountCube> {
    let lo = records.iter().map(|r| r.date).min();
    let hi = records.iter().map(|r| r.date).max();
    let (Some(start), Some(end)) = (schema.start.or(lo), schema.end.or(hi)) else {
        bail!("no events and no declared date range: the calendar is empty");
    };
    let schema = schema.clone().with_range(start, end)?;
    Ok(build_cube(records, &schema, &MaterializationPolicy::default())?)
}

pub fn is_snapshot(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 8];
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let n = file.read(&mut magic)?;
    Ok(n == 8 && &magic == b"TCUBESNP")
}

pub fn load_snapshot(path: &Path) -> Result<CountCube> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    CountCube::load(BufReader::new(file)).with_context(|| format!("loading snapshot {}", path.display()))
}

/// Region sets over the cube's location labels, with the config's size and radius.
pub fn regions_for(
    cube: &CountCube,
    config: &ScreeningConfig,
    centroids: &CentroidTable,
) -> Result<Vec<RegionSet>> {
    let location = config
        .location_attribute
        .clone()
        .or_else(|| cube.schema().location_attribute().map(|a| a.name.clone()));
    let Some(location) = location else {
        return Ok(Vec::new());
    };
    let Some(labels) = cube.labels(&location) else {
        bail!("location attribute `{location}` is not in the schema");
    };
    let table = centroids
        .covering(labels.iter().map(String::as_str).filter(|l| *l != UNKNOWN))
        .context("centroid table does not cover the location labels")?;
    Ok(enumerate_region_sets(&table, config.k_max, config.d_max_km, config.region_rule)?)
}
