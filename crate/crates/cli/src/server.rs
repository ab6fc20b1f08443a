//! HTTP API under `/v1`, backed by one immutable cube.
//!
//! Screening runs are jobs: `POST /v1/screen` answers 202 with an id and the
//! work runs on the blocking pool; `GET /v1/screen/{id}` polls it.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tcube::cube::{Conjunction, CountCube, DateWindow};
use tcube::export::ReportLine;
use tcube::geo::{CentroidTable, RegionSet};
use tcube::ingest::{summarize, DatasetSummary};
use tcube::pivot::pivot;
use tcube::screen::{massive_screen, pvalue_timeline, ScreeningConfig};
use tcube::stats::TestKind;

use crate::commands::summary_sidecar;
use crate::data;

pub struct AppState {
    pub cube: CountCube,
    pub centroids: CentroidTable,
    pub summary: Option<DatasetSummary>,
    jobs: Mutex<HashMap<u64, Job>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(cube: CountCube, centroids: CentroidTable, summary: Option<DatasetSummary>) -> Self {
        Self {
            cube,
            centroids,
            summary,
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
        }
    }
}

#[derive(Debug, Clone)]
enum Job {
    Running,
    Done { scored: u64, reports: Vec<ReportLine> },
    Failed(String),
}

pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad(msg: impl ToString) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.to_string())
    }

    fn missing(msg: impl ToString) -> Self {
        Self(StatusCode::NOT_FOUND, msg.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/schema", get(schema))
        .route("/v1/count", post(count))
        .route("/v1/timeline", post(timeline))
        .route("/v1/screen", post(start_screen))
        .route("/v1/screen/:id", get(poll_screen))
        .route("/v1/pivot", post(pivot_table))
        .route("/v1/summary", get(summary))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": crate::manifest::VERSION }))
}

async fn schema(State(st): State<Arc<AppState>>) -> Json<Value> {
    let cube = &st.cube;
    let domains: BTreeMap<&str, &[String]> = cube
        .attributes()
        .map(|a| (a, cube.labels(a).unwrap_or_default()))
        .collect();
    Json(json!({
        "schema": cube.schema(),
        "start": cube.start(),
        "end": cube.end(),
        "n_days": cube.n_days(),
        "domains": domains,
        "total_events": cube.total_events(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct CountRequest {
    #[serde(default)]
    pub conjunction: Conjunction,
    pub window: DateWindow,
}

async fn count(State(st): State<Arc<AppState>>, Json(req): Json<CountRequest>) -> ApiResult<Value> {
    let n = st.cube.count(&req.conjunction, &req.window).map_err(ApiError::bad)?;
    Ok(Json(json!({ "count": n })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineRequest {
    #[serde(default)]
    pub conjunction: Conjunction,
    /// Location labels aggregated into one region; none for the whole area.
    #[serde(default)]
    pub region: Option<Vec<String>>,
    pub window_length: Option<u32>,
    pub stride: Option<u32>,
    pub reference_length: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub observed: u64,
    pub expected: f64,
    pub p_value: f64,
    pub test: TestKind,
}

async fn timeline(
    State(st): State<Arc<AppState>>,
    Json(req): Json<TimelineRequest>,
) -> ApiResult<Vec<TimelineEntry>> {
    let mut config = ScreeningConfig::default();
    config.window_length = req.window_length.unwrap_or(config.window_length);
    config.stride = req.stride.unwrap_or(config.stride);
    config.reference_length = req.reference_length.unwrap_or(config.reference_length);
    let region = req.region.map(|mut members| {
        members.sort();
        members.dedup();
        RegionSet {
            seed: members.first().cloned().unwrap_or_default(),
            members,
        }
    });
    if region.as_ref().is_some_and(RegionSet::is_empty) {
        return Err(ApiError::bad("region has no members"));
    }
    let points =
        pvalue_timeline(&st.cube, &req.conjunction, region.as_ref(), &config).map_err(ApiError::bad)?;
    Ok(Json(
        points
            .into_iter()
            .map(|p| TimelineEntry {
                window_start: p.window.start,
                window_end: p.window.end(),
                observed: p.observed,
                expected: p.expected,
                p_value: p.p_value,
                test: p.test_used,
            })
            .collect(),
    ))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenRequest {
    #[serde(default)]
    pub config: ScreeningConfig,
}

async fn start_screen(
    State(st): State<Arc<AppState>>,
    Json(req): Json<ScreenRequest>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let config = req.config;
    config.validate().map_err(ApiError::bad)?;
    let regions = data::regions_for(&st.cube, &config, &st.centroids).map_err(|e| ApiError::bad(format!("{e:#}")))?;
    let id = st.next_job.fetch_add(1, Ordering::Relaxed);
    st.jobs.lock().unwrap().insert(id, Job::Running);
    let worker = Arc::clone(&st);
    tokio::task::spawn_blocking(move || {
        let job = match massive_screen(&worker.cube, &config, &regions) {
            Ok(out) => Job::Done {
                scored: out.scored,
                reports: out.reports.iter().map(|r| ReportLine::from_report(r, None)).collect(),
            },
            Err(e) => Job::Failed(e.to_string()),
        };
        worker.jobs.lock().unwrap().insert(id, job);
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": id }))))
}

#[derive(Debug, Deserialize)]
pub struct PollParams {
    pub limit: Option<usize>,
}

async fn poll_screen(
    State(st): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Query(params): Query<PollParams>,
) -> ApiResult<Value> {
    let job = st.jobs.lock().unwrap().get(&id).cloned();
    let body = match job.ok_or_else(|| ApiError::missing(format!("no screening job {id}")))? {
        Job::Running => json!({ "id": id, "status": "running" }),
        Job::Failed(e) => json!({ "id": id, "status": "failed", "error": e }),
        Job::Done { scored, reports } => {
            let total = reports.len();
            let shown = &reports[..params.limit.unwrap_or(total).min(total)];
            json!({ "id": id, "status": "done", "scored": scored, "total": total, "reports": shown })
        }
    };
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PivotRequest {
    pub row: String,
    pub col: String,
    #[serde(default)]
    pub filter: Conjunction,
    /// The whole calendar when absent.
    pub window: Option<DateWindow>,
}

async fn pivot_table(State(st): State<Arc<AppState>>, Json(req): Json<PivotRequest>) -> ApiResult<Value> {
    let window = match req.window {
        Some(w) => w,
        None => DateWindow::new(st.cube.start(), st.cube.n_days() as u32).map_err(ApiError::bad)?,
    };
    let table = pivot(&st.cube, &req.row, &req.col, &req.filter, &window).map_err(ApiError::bad)?;
    Ok(Json(serde_json::to_value(table).map_err(ApiError::bad)?))
}

async fn summary(State(st): State<Arc<AppState>>) -> ApiResult<DatasetSummary> {
    st.summary
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::missing("no summary for this cube"))
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Event file or cube snapshot.
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub centroids: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

/// Loads the cube for `serve`, with its summary when one is available.
pub fn load_state(args: &ServeArgs) -> Result<AppState> {
    let centroids = data::load_centroids(args.centroids.as_deref())?;
    if data::is_snapshot(&args.data)? {
        let cube = data::load_snapshot(&args.data)?;
        let sidecar = summary_sidecar(&args.data);
        let summary = match std::fs::read_to_string(&sidecar) {
            Ok(text) => Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", sidecar.display()))?),
            Err(_) => None,
        };
        return Ok(AppState::new(cube, centroids, summary));
    }
    let schema = data::load_schema(args.schema.as_deref())?;
    let records = data::read_event_file(&args.data, &schema)?;
    let cube = data::cube_for(&schema, &records)?;
    Ok(AppState::new(cube, centroids, Some(summarize(&records))))
}

pub async fn serve(args: &ServeArgs) -> Result<()> {
    let state = Arc::new(load_state(args)?);
    let listener = tokio::net::TcpListener::bind(args.addr)
        .await
        .with_context(|| format!("binding {}", args.addr))?;
    eprintln!("listening on http://{}/v1", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
