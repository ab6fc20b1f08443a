//! Location centroids and admissible multi-location aggregates.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius (IUGG), kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

pub const DEFAULT_K_MAX: usize = 5;
pub const DEFAULT_D_MAX_KM: f64 = 50.0;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("location `{0}` has no centroid")]
    MissingCentroid(String),
    #[error("centroid of `{label}` out of range: ({lat}, {lon})")]
    InvalidCoordinate { label: String, lat: f64, lon: f64 },
    #[error("duplicate centroid for `{0}`")]
    Duplicate(String),
    #[error("k_max must be at least 1")]
    ZeroSize,
    #[error("d_max must be a non-negative distance")]
    NegativeRadius,
    #[error("centroid file: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`] (haversine).
pub fn geodesic_distance(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CentroidTable {
    entries: BTreeMap<String, LatLon>,
}

#[derive(Deserialize)]
struct CentroidRow {
    location: String,
    lat: f64,
    lon: f64,
}

impl CentroidTable {
    pub fn new<I, S>(entries: I) -> Result<Self, GeoError>
    where
        I: IntoIterator<Item = (S, LatLon)>,
        S: Into<String>,
    {
        let mut table = Self::default();
        for (label, point) in entries {
            let label = label.into();
            if !point.is_valid() {
                return Err(GeoError::InvalidCoordinate {
                    label,
                    lat: point.lat,
                    lon: point.lon,
                });
            }
            if table.entries.insert(label.clone(), point).is_some() {
                return Err(GeoError::Duplicate(label));
            }
        }
        Ok(table)
    }

    /// Reads `location,lat,lon` CSV.
    pub fn from_csv<R: Read>(source: R) -> Result<Self, GeoError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let rows = reader
            .deserialize::<CentroidRow>()
            .map(|r| r.map(|row| (row.location, LatLon::new(row.lat, row.lon))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self, GeoError> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    /// Approximate centroids of El Salvador's fourteen departments.
    pub fn el_salvador() -> Self {
        Self::from_csv(include_str!("../data/el_salvador_centroids.csv").as_bytes())
            .expect("bundled centroid table parses")
    }

    pub fn get(&self, label: &str) -> Option<LatLon> {
        self.entries.get(label).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Restricts the table to `labels`, failing if any label lacks a centroid.
    pub fn covering<'a, I>(&self, labels: I) -> Result<Self, GeoError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut entries = BTreeMap::new();
        for label in labels {
            let point = self
                .get(label)
                .ok_or_else(|| GeoError::MissingCentroid(label.to_string()))?;
            entries.insert(label.to_string(), point);
        }
        Ok(Self { entries })
    }
}

/// Which member sets count as a single aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibilityRule {
    /// Every member within `d_max` of one member (the seed).
    #[default]
    Seed,
    /// Every pair of members within `d_max` of each other.
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionSet {
    /// Sorted, non-empty.
    pub members: Vec<String>,
    pub seed: String,
}

impl RegionSet {
    pub fn singleton(label: &str) -> Self {
        Self {
            members: vec![label.to_string()],
            seed: label.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.members.iter().any(|m| m == label)
    }

    pub fn intersects(&self, other: &RegionSet) -> bool {
        self.members.iter().any(|m| other.contains(m))
    }
}

impl std::fmt::Display for RegionSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{{}}}", self.members.join(", "))
    }
}

/// Every member set of size ≤ `k_max` admissible under `rule`, without
/// duplicates, ordered lexicographically by sorted members.
pub fn enumerate_region_sets(
    centroids: &CentroidTable,
    k_max: usize,
    d_max: f64,
    rule: AdmissibilityRule,
) -> Result<Vec<RegionSet>, GeoError> {
    if k_max == 0 {
        return Err(GeoError::ZeroSize);
    }
    if d_max.is_nan() || d_max < 0.0 {
        return Err(GeoError::NegativeRadius);
    }
    let labels: Vec<&str> = centroids.labels().collect();
    let points: Vec<LatLon> = labels.iter().map(|l| centroids.get(l).unwrap()).collect();
    let n = labels.len();
    let near: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| geodesic_distance(points[i], points[j]) <= d_max).collect())
        .collect();

    // Member index sets, sorted ascending; labels are sorted so index order is
    // lexicographic order.
    let mut found: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for seed in 0..n {
        let neighbours: Vec<usize> = (0..n).filter(|&j| j != seed && near[seed][j]).collect();
        let mut extend = |chosen: &[usize]| {
            let mut members: Vec<usize> = chosen.to_vec();
            members.push(seed);
            members.sort_unstable();
            let admissible = match rule {
                AdmissibilityRule::Seed => true,
                AdmissibilityRule::Pairwise => members
                    .iter()
                    .all(|&i| members.iter().all(|&j| near[i][j])),
            };
            if admissible {
                found.entry(members).or_insert(seed);
            }
        };
        for size in 0..k_max.min(neighbours.len() + 1) {
            for combo in crate::cube::combinations(&neighbours, size) {
                extend(&combo);
            }
        }
    }

    let mut sets: Vec<RegionSet> = found
        .into_iter()
        .map(|(members, seed)| RegionSet {
            members: members.iter().map(|&i| labels[i].to_string()).collect(),
            seed: labels[seed].to_string(),
        })
        .collect();
    sets.sort_by(|a, b| a.members.cmp(&b.members));
    Ok(sets)
}
