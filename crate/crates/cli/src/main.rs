use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use tcube::export::top_table;
use tcube_cli::commands::{self, IngestArgs, PivotArgs, ScreenArgs, SnapshotArgs, SynthArgs, WatchArgs};
use tcube_cli::server::{self, ServeArgs};

/// Count-cube indexing and significance screening of event reports.
#[derive(Parser)]
#[command(name = "tcube", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a raw CSV, write canonical events and a summary.
    Ingest(IngestArgs),
    /// Screen every conjunction, region and window; write ranked reports.
    Screen(ScreenArgs),
    /// Row-conditioned frequency table of two attributes.
    Pivot(PivotArgs),
    /// Serve the HTTP API over an event file or snapshot.
    Serve(ServeArgs),
    /// Screen each new day of an append-only event file.
    Watch(WatchArgs),
    /// Save a cube snapshot for fast startup.
    Snapshot(SnapshotArgs),
    /// Generate synthetic events from a TOML config.
    Synth(SynthArgs),
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => {
            let run = commands::ingest(&args)?;
            if run.rejected > 0 {
                eprintln!("{} malformed rows skipped", run.rejected);
            }
        }
        Command::Screen(args) => {
            let run = commands::screen(&args)?;
            println!(
                "{} queries scored, {} reported (run {})",
                run.outcome.scored,
                run.outcome.reports.len(),
                &run.run_id[..12]
            );
            print!("{}", top_table(&run.outcome.reports, args.top));
            println!("reports in {}", args.out_dir.display());
        }
        Command::Pivot(args) => {
            commands::run_pivot(&args)?;
        }
        Command::Serve(args) => {
            tokio::runtime::Runtime::new()?.block_on(server::serve(&args))?;
        }
        Command::Watch(args) => {
            let n = commands::watch(&args)?;
            eprintln!("{n} alerts");
        }
        Command::Snapshot(args) => {
            commands::snapshot(&args)?;
            eprintln!("wrote {}", args.out.display());
        }
        Command::Synth(args) => {
            let n = commands::synth(&args)?;
            eprintln!("wrote {n} events to {}", args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
