use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::NaiveDate;
use tcube::export::{ReportLine, CSV_COLUMNS};
use tcube::ingest::{parse_events, DatasetSummary};
use tcube::Schema;
use tcube_cli::commands::{
    self, AlertLine, IngestArgs, PivotArgs, PivotFormat, ScreenArgs, ScreenOverrides, SnapshotArgs,
    SynthArgs, WatchArgs,
};
use tcube_cli::data;
use tcube_cli::manifest::RunManifest;
use tcube_cli::server::{load_state, ServeArgs};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_tcube");
const HEADER: &str = "date,age,gender,state,municipality,scene,perpetrator";

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Two years of background with a strong cluster of 12-14 year olds in
/// three eastern states during June 2013.
fn synth_events(dir: &Path) -> PathBuf {
    let config = dir.join("synth.toml");
    fs::write(
        &config,
        r#"
start = "2012-01-01"
end = "2013-12-31"
seed = 3
attributes = ["state", "age", "perpetrator"]
uniform_rate = 0.002

[[injections]]
terms = { state = ["SAN MIGUEL", "MORAZAN", "LA UNION"], age = ["12-14"] }
start = "2013-06-01"
end = "2013-06-28"
multiplier = 8.0
"#,
    )
    .unwrap();
    let out = dir.join("events.csv");
    let n = commands::synth(&SynthArgs {
        config,
        out: out.clone(),
        seed: None,
        schema: None,
    })
    .unwrap();
    assert!(n > 1000);
    out
}

fn screen_args(events: &Path, out_dir: PathBuf) -> ScreenArgs {
    ScreenArgs {
        events: events.to_path_buf(),
        config: None,
        schema: None,
        centroids: None,
        out_dir,
        top: 5,
        frontier: None,
        overrides: ScreenOverrides {
            attributes: Some(vec!["state".into(), "age".into()]),
            alpha: Some(0.01),
            ..ScreenOverrides::default()
        },
    }
}

#[test]
fn ingest_writes_canonical_events_and_summary() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw.csv");
    fs::write(
        &raw,
        format!(
            "{HEADER}\n01/05/2008,13,F,la unión,Conchagua,,NOVIO\n02/30/2008,13,F,MORAZAN,,,\n01/06/2008,40,male,MORAZAN,,home,father\n"
        ),
    )
    .unwrap();
    let args = IngestArgs {
        input: raw.clone(),
        schema: None,
        date_format: Some("%m/%d/%Y".into()),
        out: Some(dir.path().join("events.csv")),
        summary: Some(dir.path().join("summary.json")),
        manifest: Some(dir.path().join("manifest.json")),
    };
    let run = commands::ingest(&args).unwrap();
    assert_eq!(run.rejected, 1);
    assert_eq!(run.summary.total, 2);

    let text = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert!(text.starts_with(HEADER));
    assert!(text.contains("2008-01-05,13,female,LA UNION,Conchagua,UNKNOWN,boyfriend"), "{text}");
    let back = parse_events(text.as_bytes(), &Schema::default_reports()).unwrap();
    assert_eq!(back.records.len(), 2);

    let summary: DatasetSummary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, run.summary);
    let manifest = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.command, "ingest");
    assert_eq!(manifest.inputs[0].path, raw);
    assert_eq!(manifest.outputs.len(), 2);
}

#[test]
fn ingest_of_empty_file_reports_zero() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("empty.csv");
    fs::write(&raw, format!("{HEADER}\n")).unwrap();
    let out = Command::new(BIN).arg("ingest").arg(&raw).output().unwrap();
    assert!(out.status.success());
    let summary: DatasetSummary = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary.total, 0);
}

#[test]
fn malformed_header_exits_nonzero() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("bad.csv");
    fs::write(&raw, "date,age,gender\n2008-01-01,3,female\n").unwrap();
    let out = Command::new(BIN).arg("ingest").arg(&raw).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("state") && err.contains("perpetrator"), "{err}");
}

#[test]
fn screen_outputs_are_consistent_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let events = synth_events(dir.path());
    let first = commands::screen(&screen_args(&events, dir.path().join("a"))).unwrap();
    assert!(!first.outcome.reports.is_empty());

    // The injected eastern cluster leads the ranking.
    let top = &first.outcome.reports[0];
    if let Some(region) = &top.query.region {
        assert!(region.members.iter().any(|m| ["SAN MIGUEL", "MORAZAN", "LA UNION"].contains(&m.as_str())));
    }
    assert_eq!(top.query.conjunction.get("age").unwrap().iter().collect::<Vec<_>>(), ["12-14"]);
    let end = top.query.window.end();
    assert!(end >= date(2013, 6, 1) && end <= date(2013, 7, 28), "{end}");

    let mut csv = csv::Reader::from_path(&first.csv).unwrap();
    assert_eq!(csv.headers().unwrap().iter().collect::<Vec<_>>(), CSV_COLUMNS);
    assert_eq!(csv.records().count(), first.outcome.reports.len());

    let lines: Vec<ReportLine> = fs::read_to_string(&first.jsonl)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), first.outcome.reports.len());
    assert!(lines.iter().all(|l| l.run.as_deref() == Some(first.run_id.as_str())));

    let manifest = RunManifest::read(&first.manifest).unwrap();
    assert_eq!(manifest.run_id, first.run_id);
    assert_eq!(manifest.outputs.len(), 2);

    let second = commands::screen(&screen_args(&events, dir.path().join("b"))).unwrap();
    assert_eq!(second.run_id, first.run_id);
    assert_eq!(fs::read(&first.jsonl).unwrap(), fs::read(&second.jsonl).unwrap());
    assert_eq!(fs::read(&first.csv).unwrap(), fs::read(&second.csv).unwrap());

    let mut changed = screen_args(&events, dir.path().join("c"));
    changed.overrides.alpha = Some(0.001);
    let third = commands::screen(&changed).unwrap();
    assert_ne!(third.run_id, first.run_id);
}

#[test]
fn screen_config_file_and_overrides() {
    let dir = TempDir::new().unwrap();
    let events = synth_events(dir.path());
    let config = dir.path().join("screen.toml");
    fs::write(&config, "attributes = [\"age\"]\nalpha = 0.2\nwindow_length = 14\nreference_length = 28\n").unwrap();
    let mut args = screen_args(&events, dir.path().join("out"));
    args.config = Some(config.clone());
    args.overrides = ScreenOverrides {
        alpha: Some(0.01),
        ..ScreenOverrides::default()
    };
    let run = commands::screen(&args).unwrap();
    let manifest = RunManifest::read(&run.manifest).unwrap();
    let screening = &manifest.config["screening"];
    assert_eq!(screening["alpha"], 0.01);
    assert_eq!(screening["window_length"], 14);
    assert_eq!(screening["attributes"], serde_json::json!(["age"]));
    assert_eq!(manifest.inputs.len(), 2);
    for r in &run.outcome.reports {
        assert_eq!(r.query.window.length, 14);
        assert!(r.p_value <= 0.01);
    }

    fs::write(&config, "colour = 3\n").unwrap();
    assert!(commands::screen(&args).is_err());
}

#[test]
fn prospective_screen_uses_only_the_frontier() {
    let dir = TempDir::new().unwrap();
    let events = synth_events(dir.path());
    let mut args = screen_args(&events, dir.path().join("p"));
    args.frontier = Some(date(2013, 6, 28));
    let run = commands::screen(&args).unwrap();
    assert!(!run.outcome.reports.is_empty());
    assert!(run.outcome.reports.iter().all(|r| r.query.window.end() == date(2013, 6, 28)));

    // The bundled schema's calendar opens in 2006.
    args.frontier = Some(date(2006, 1, 10));
    assert!(commands::screen(&args).is_err());
}

#[test]
fn pivot_formats() {
    let dir = TempDir::new().unwrap();
    let events = synth_events(dir.path());
    let mut args = PivotArgs {
        events: events.clone(),
        row: "age".into(),
        col: "perpetrator".into(),
        filter: vec!["state=SAN MIGUEL|MORAZAN".into()],
        start: Some(date(2013, 1, 1)),
        length: None,
        format: PivotFormat::Json,
        out: Some(dir.path().join("pivot.json")),
        schema: None,
    };
    let table = commands::run_pivot(&args).unwrap();
    let text = fs::read_to_string(dir.path().join("pivot.json")).unwrap();
    assert_eq!(serde_json::from_str::<tcube::pivot::PivotTable>(&text).unwrap(), table);

    let records = data::read_event_file(&events, &Schema::default_reports()).unwrap();
    let row = table.row_labels.iter().position(|l| l == "12-14").unwrap();
    let want = records
        .iter()
        .filter(|r| r.date.format("%Y").to_string() == "2013")
        .filter(|r| matches!(r.value("state"), Some("SAN MIGUEL" | "MORAZAN")))
        .filter(|r| r.value("age") == Some("12-14"))
        .count() as u64;
    assert_eq!(table.row_counts[row], want);

    args.format = PivotFormat::Csv;
    args.out = Some(dir.path().join("pivot.csv"));
    commands::run_pivot(&args).unwrap();
    let mut csv = csv::Reader::from_path(dir.path().join("pivot.csv")).unwrap();
    assert_eq!(csv.records().count(), table.row_labels.len());

    args.filter = vec!["state".into()];
    assert!(commands::run_pivot(&args).is_err());
}

#[test]
fn watch_replay_emits_alerts_for_new_days_only() {
    let dir = TempDir::new().unwrap();
    let events = synth_events(dir.path());
    let text = fs::read_to_string(&events).unwrap();
    let (history, tail): (Vec<&str>, Vec<&str>) =
        text.lines().skip(1).partition(|l| l < &"2013-06-20");
    let history_path = dir.path().join("history.csv");
    let append_path = dir.path().join("append.csv");
    fs::write(&history_path, format!("{HEADER}\n{}\n", history.join("\n"))).unwrap();
    let upto = |day: &str| -> Vec<&str> { tail.iter().copied().filter(|l| l < &day).collect() };
    fs::write(&append_path, format!("{HEADER}\n{}\n", upto("2013-06-29").join("\n"))).unwrap();

    let args = WatchArgs {
        events: history_path.clone(),
        append: append_path.clone(),
        config: None,
        schema: None,
        centroids: None,
        out: Some(dir.path().join("alerts.jsonl")),
        follow: false,
        poll_ms: 10,
        overrides: ScreenOverrides {
            attributes: Some(vec!["state".into(), "age".into()]),
            alpha: Some(0.001),
            ..ScreenOverrides::default()
        },
    };
    let n = commands::watch(&args).unwrap();
    assert!(n > 0);
    let alerts: Vec<AlertLine> = fs::read_to_string(dir.path().join("alerts.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(alerts.len(), n);
    for a in &alerts {
        assert!(a.frontier >= date(2013, 6, 20) && a.frontier <= date(2013, 6, 28));
        assert_eq!(a.report.window_end, a.frontier);
        assert!(a.report.p_value <= 0.001);
    }

    // Each frontier's alerts equal a prospective screen at that day.
    let last = alerts.last().unwrap().frontier;
    let mut full = format!("{HEADER}\n{}\n", history.join("\n"));
    full.push_str(&upto("2013-06-29").join("\n"));
    full.push('\n');
    fs::write(dir.path().join("full.csv"), full).unwrap();
    let mut screen = screen_args(&dir.path().join("full.csv"), dir.path().join("s"));
    screen.overrides = args.overrides.clone();
    screen.frontier = Some(last);
    let run = commands::screen(&screen).unwrap();
    let at_last: Vec<&AlertLine> = alerts.iter().filter(|a| a.frontier == last).collect();
    assert_eq!(at_last.len(), run.outcome.reports.len());
    for (a, r) in at_last.iter().zip(&run.outcome.reports) {
        assert_eq!(a.report.p_value, r.p_value);
        assert_eq!(a.report.observed, r.observed);
    }

    // No new events, no output.
    fs::write(&append_path, format!("{HEADER}\n")).unwrap();
    assert_eq!(commands::watch(&args).unwrap(), 0);
    assert_eq!(fs::read_to_string(dir.path().join("alerts.jsonl")).unwrap(), "");
}

#[test]
fn snapshot_serves_same_answers() {
    let dir = TempDir::new().unwrap();
    let events = synth_events(dir.path());
    let snap = dir.path().join("cube.bin");
    commands::snapshot(&SnapshotArgs {
        events: events.clone(),
        out: snap.clone(),
        schema: None,
    })
    .unwrap();
    assert!(data::is_snapshot(&snap).unwrap());
    assert!(!data::is_snapshot(&events).unwrap());

    let serve = |data: PathBuf| ServeArgs {
        data,
        schema: None,
        centroids: None,
        addr: "127.0.0.1:0".parse().unwrap(),
    };
    let from_snapshot = load_state(&serve(snap)).unwrap();
    let from_events = load_state(&serve(events)).unwrap();
    assert_eq!(from_snapshot.cube.total_events(), from_events.cube.total_events());
    assert_eq!(from_snapshot.summary, from_events.summary);
    let q = tcube::Conjunction::new().with("state", ["MORAZAN", "LA UNION"]).term("age", "12-14");
    let w = tcube::DateWindow::new(date(2013, 5, 20), 40).unwrap();
    assert_eq!(
        from_snapshot.cube.count(&q, &w).unwrap(),
        from_events.cube.count(&q, &w).unwrap()
    );
}

#[test]
fn busy_port_exits_nonzero() {
    let dir = TempDir::new().unwrap();
    let events = synth_events(dir.path());
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap();
    let out = Command::new(BIN)
        .args(["serve", events.to_str().unwrap(), "--addr", &addr.to_string()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("binding"));
}

#[test]
fn cli_screen_prints_top_table() {
    let dir = TempDir::new().unwrap();
    let events = synth_events(dir.path());
    let out = Command::new(BIN)
        .args(["screen", events.to_str().unwrap(), "--attributes", "state,age", "--alpha", "0.01", "--top", "3"])
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("P-Value") && stdout.contains("12-14"), "{stdout}");
    assert!(dir.path().join("out/reports.csv").exists());
}
