//! One function per subcommand. Argument structs double as clap definitions.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration as Pause;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, ValueEnum};
use serde::Serialize;
use tcube::cube::{Conjunction, DateWindow};
use tcube::export::{self, ReportLine};
use tcube::ingest::{parse_events, summarize, write_events, DatasetSummary, EventRecord};
use tcube::pivot::{pivot, PivotTable};
use tcube::screen::{massive_screen, prospective_screen, ScreenOutcome, ScreeningConfig};
use tcube::synth::{generate_synthetic, SyntheticConfig};
use tcube::watch::{Alert, Watcher};
use tcube::Schema;

use crate::data;
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Raw CSV with a header row.
    pub input: PathBuf,
    /// Schema file (JSON); the bundled crime-report schema by default.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Date pattern of the input, e.g. `%m/%d/%Y`.
    #[arg(long)]
    pub date_format: Option<String>,
    /// Validated event file to write, with ISO dates.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Write the summary here instead of standard output.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct IngestSettings<'a> {
    schema: &'a Schema,
}

pub struct IngestRun {
    pub summary: DatasetSummary,
    pub rejected: usize,
}

pub fn ingest(args: &IngestArgs) -> Result<IngestRun> {
    let mut schema = data::load_schema(args.schema.as_deref())?;
    if let Some(fmt) = &args.date_format {
        schema.date_format = fmt.clone();
    }
    let mut manifest = RunManifest::begin("ingest", &IngestSettings { schema: &schema }, &[&args.input])?;
    let (records, errors) = data::read_events(&args.input, &schema)?;
    data::warn_rows(&args.input, &errors);
    let summary = summarize(&records);
    if let Some(out) = &args.out {
        let sink = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
        write_events(sink, &records, &schema.canonical())?;
        manifest.record_output(out)?;
    }
    let text = serde_json::to_string_pretty(&summary)?;
    match &args.summary {
        Some(path) => {
            fs::write(path, format!("{text}\n"))?;
            manifest.record_output(path)?;
        }
        None => println!("{text}"),
    }
    if let Some(path) = &args.manifest {
        manifest.write(path)?;
    }
    Ok(IngestRun {
        summary,
        rejected: errors.len(),
    })
}

/// Flags overriding fields of the screening config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ScreenOverrides {
    /// Comma-separated attributes to vary.
    #[arg(long, value_delimiter = ',')]
    pub attributes: Option<Vec<String>>,
    /// Pinned term `attribute=label[|label...]`; repeatable.
    #[arg(long = "pin")]
    pub pinned: Vec<String>,
    #[arg(long)]
    pub max_terms: Option<usize>,
    #[arg(long)]
    pub window_length: Option<u32>,
    #[arg(long)]
    pub stride: Option<u32>,
    #[arg(long)]
    pub reference_length: Option<u32>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub d_max_km: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub benjamini_hochberg: bool,
    /// Score on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
}

impl ScreenOverrides {
    pub fn apply(&self, config: &mut ScreeningConfig) -> Result<()> {
        if let Some(a) = &self.attributes {
            config.attributes = a.clone();
        }
        for pin in &self.pinned {
            let (attr, labels) = parse_term(pin)?;
            config.pinned.insert(attr, labels);
        }
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { config.$target = v; })*
            };
        }
        set!(max_terms => max_fixed_terms, window_length => window_length, stride => stride,
             reference_length => reference_length, k_max => k_max, d_max_km => d_max_km, alpha => alpha);
        if self.benjamini_hochberg {
            config.benjamini_hochberg = true;
        }
        if self.sequential {
            config.parallel = false;
        }
        Ok(())
    }
}

/// `attr=a|b` → (attr, [a, b]).
pub fn parse_term(text: &str) -> Result<(String, Vec<String>)> {
    let Some((attr, labels)) = text.split_once('=') else {
        bail!("term `{text}` is not of the form attribute=label[|label...]");
    };
    let labels: Vec<String> = labels.split('|').map(|l| l.trim().to_string()).collect();
    if attr.trim().is_empty() || labels.iter().any(String::is_empty) {
        bail!("term `{text}` has an empty attribute or label");
    }
    Ok((attr.trim().to_string(), labels))
}

pub fn load_screening_config(path: Option<&Path>, overrides: &ScreenOverrides) -> Result<ScreeningConfig> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScreeningConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ScreeningConfig::default(),
    };
    overrides.apply(&mut config)?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Args)]
pub struct ScreenArgs {
    /// Event file in the canonical format.
    pub events: PathBuf,
    /// Screening config (TOML).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Centroid table, `location,lat,lon`.
    #[arg(long)]
    pub centroids: Option<PathBuf>,
    /// Directory receiving reports.jsonl, reports.csv and manifest.json.
    #[arg(long, short, default_value = "screen-out")]
    pub out_dir: PathBuf,
    /// Rows of the console table.
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    /// Screen only windows ending on this day (prospective mode).
    #[arg(long)]
    pub frontier: Option<NaiveDate>,
    #[command(flatten)]
    pub overrides: ScreenOverrides,
}

#[derive(Debug, Serialize)]
struct ScreenSettings<'a> {
    screening: &'a ScreeningConfig,
    frontier: Option<NaiveDate>,
    schema: &'a Schema,
}

pub struct ScreenRun {
    pub outcome: ScreenOutcome,
    pub run_id: String,
    pub jsonl: PathBuf,
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

pub fn screen(args: &ScreenArgs) -> Result<ScreenRun> {
    let schema = data::load_schema(args.schema.as_deref())?;
    let mut config = load_screening_config(args.config.as_deref(), &args.overrides)?;
    if args.frontier.is_some() {
        config.prospective = true;
    }
    let records = data::read_event_file(&args.events, &schema)?;
    let cube = data::cube_for(&schema, &records)?;
    let frontier = config.prospective.then(|| args.frontier.unwrap_or(cube.end()));

    let mut inputs: Vec<&Path> = vec![&args.events];
    inputs.extend(args.config.as_deref());
    inputs.extend(args.centroids.as_deref());
    let settings = ScreenSettings {
        screening: &config,
        frontier,
        schema: &schema,
    };
    let mut manifest = RunManifest::begin("screen", &settings, &inputs)?;

    let centroids = data::load_centroids(args.centroids.as_deref())?;
    let regions = data::regions_for(&cube, &config, &centroids)?;
    let outcome = match frontier {
        Some(day) => prospective_screen(&cube, &config, &regions, day)?,
        None => massive_screen(&cube, &config, &regions)?,
    };

    fs::create_dir_all(&args.out_dir)?;
    let jsonl = args.out_dir.join("reports.jsonl");
    let csv = args.out_dir.join("reports.csv");
    export::write_jsonl(BufWriter::new(File::create(&jsonl)?), &outcome.reports, Some(&manifest.run_id))?;
    export::write_csv(BufWriter::new(File::create(&csv)?), &outcome.reports)?;
    manifest.record_output(&jsonl)?;
    manifest.record_output(&csv)?;
    let manifest_path = args.out_dir.join("manifest.json");
    manifest.write(&manifest_path)?;
    Ok(ScreenRun {
        outcome,
        run_id: manifest.run_id,
        jsonl,
        csv,
        manifest: manifest_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PivotFormat {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct PivotArgs {
    pub events: PathBuf,
    #[arg(long)]
    pub row: String,
    #[arg(long)]
    pub col: String,
    /// Filter term `attribute=label[|label...]`; repeatable.
    #[arg(long)]
    pub filter: Vec<String>,
    /// First day of the window; the calendar start by default.
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Window length in days; through the calendar end by default.
    #[arg(long)]
    pub length: Option<u32>,
    #[arg(long, value_enum, default_value_t = PivotFormat::Text)]
    pub format: PivotFormat,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

pub fn conjunction_of(terms: &[String]) -> Result<Conjunction> {
    let mut q = Conjunction::new();
    for term in terms {
        let (attr, labels) = parse_term(term)?;
        if q.get(&attr).is_some() {
            bail!("attribute `{attr}` appears in two terms");
        }
        q.insert(&attr, labels);
    }
    Ok(q)
}

pub fn run_pivot(args: &PivotArgs) -> Result<PivotTable> {
    let schema = data::load_schema(args.schema.as_deref())?;
    let records = data::read_event_file(&args.events, &schema)?;
    let cube = data::cube_for(&schema, &records)?;
    let filter = conjunction_of(&args.filter)?;
    let start = args.start.unwrap_or(cube.start());
    let length = match args.length {
        Some(n) => n,
        None => {
            let days = (cube.end() - start).num_days() + 1;
            if days < 1 {
                bail!("window start {start} is after the calendar end {}", cube.end());
            }
            days as u32
        }
    };
    let window = DateWindow::new(start, length)?;
    let table = pivot(&cube, &args.row, &args.col, &filter, &window)?;
    let mut sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    match args.format {
        PivotFormat::Csv => table.write_csv(&mut sink)?,
        PivotFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, &table)?;
            sink.write_all(b"\n")?;
        }
        PivotFormat::Text => sink.write_all(table.render_text().as_bytes())?,
    }
    sink.flush()?;
    Ok(table)
}

#[derive(Debug, Clone, Args)]
pub struct WatchArgs {
    /// History in the canonical format.
    pub events: PathBuf,
    /// File receiving appended events (same header).
    #[arg(long)]
    pub append: PathBuf,
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub centroids: Option<PathBuf>,
    /// Alerts as JSON lines; standard output by default.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Keep polling the append file for new lines.
    #[arg(long)]
    pub follow: bool,
    #[arg(long, default_value_t = 1000)]
    pub poll_ms: u64,
    #[command(flatten)]
    pub overrides: ScreenOverrides,
}

/// One alert line: the frontier that raised it plus the flat report.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct AlertLine {
    pub frontier: NaiveDate,
    #[serde(flatten)]
    pub report: ReportLine,
}

fn alert_line(alert: &Alert, run: &str) -> AlertLine {
    AlertLine {
        frontier: alert.frontier,
        report: ReportLine::from_report(&alert.report, Some(run)),
    }
}

/// Replays the append file day by day (or follows it) and writes alerts.
/// Returns the number of alerts written.
pub fn watch(args: &WatchArgs) -> Result<usize> {
    let mut schema = data::load_schema(args.schema.as_deref())?.canonical();
    // The stream may run past the declared range.
    schema.end = None;
    let config = load_screening_config(args.config.as_deref(), &args.overrides)?;
    let history = data::read_event_file(&args.events, &schema)?;
    let mut inputs: Vec<&Path> = vec![&args.events];
    inputs.extend(args.config.as_deref());
    let manifest = RunManifest::begin("watch", &config, &inputs)?;

    let centroids = data::load_centroids(args.centroids.as_deref())?;
    let probe = data::cube_for(&schema, &history)?;
    let regions = data::regions_for(&probe, &config, &centroids)?;
    drop(probe);
    let mut watcher = Watcher::new(schema.clone(), config, regions, history)?;

    let mut sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut written = 0;
    let mut emit = |alerts: Vec<Alert>, sink: &mut Box<dyn Write>| -> Result<()> {
        for alert in &alerts {
            serde_json::to_writer(&mut *sink, &alert_line(alert, &manifest.run_id))?;
            sink.write_all(b"\n")?;
        }
        sink.flush()?;
        written += alerts.len();
        Ok(())
    };

    if !args.follow {
        let (records, errors) = data::read_events(&args.append, &schema)?;
        data::warn_rows(&args.append, &errors);
        let mut by_day: BTreeMap<NaiveDate, Vec<EventRecord>> = BTreeMap::new();
        for r in records {
            by_day.entry(r.date).or_default().push(r);
        }
        for (_, batch) in by_day {
            emit(watcher.push_batch(batch)?, &mut sink)?;
        }
        return Ok(written);
    }

    let mut consumed = 0usize;
    loop {
        let text = fs::read_to_string(&args.append).unwrap_or_default();
        // Only complete lines; the header is line 0.
        let complete = text.rfind('\n').map_or("", |i| &text[..=i]);
        let mut lines = complete.lines();
        if let Some(header) = lines.next() {
            let fresh: Vec<&str> = lines.skip(consumed).collect();
            if !fresh.is_empty() {
                consumed += fresh.len();
                let chunk = format!("{header}\n{}\n", fresh.join("\n"));
                let out = parse_events(chunk.as_bytes(), &schema)?;
                data::warn_rows(&args.append, &out.errors);
                emit(watcher.push_batch(out.records)?, &mut sink)?;
            }
        }
        thread::sleep(Pause::from_millis(args.poll_ms));
    }
}

#[derive(Debug, Clone, Args)]
pub struct SnapshotArgs {
    pub events: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

/// Path of the summary written next to a snapshot.
pub fn summary_sidecar(snapshot: &Path) -> PathBuf {
    let mut name = snapshot.as_os_str().to_owned();
    name.push(".summary.json");
    PathBuf::from(name)
}

pub fn snapshot(args: &SnapshotArgs) -> Result<()> {
    let schema = data::load_schema(args.schema.as_deref())?;
    let records = data::read_event_file(&args.events, &schema)?;
    let cube = data::cube_for(&schema, &records)?;
    let mut sink = BufWriter::new(File::create(&args.out)?);
    cube.save(&mut sink)?;
    sink.flush()?;
    fs::write(summary_sidecar(&args.out), serde_json::to_string_pretty(&summarize(&records))?)?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Generator config (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

pub fn synth(args: &SynthArgs) -> Result<usize> {
    let schema = data::load_schema(args.schema.as_deref())?;
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let config = SyntheticConfig::from_toml(&text)?;
    let records = generate_synthetic(&schema, &config, args.seed.unwrap_or(config.seed))?;
    let sink = BufWriter::new(File::create(&args.out)?);
    write_events(sink, &records, &schema.canonical())?;
    Ok(records.len())
}
