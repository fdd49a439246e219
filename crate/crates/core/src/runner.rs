//! End-to-end runs: source → windows → engine → report files.

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use crate::engine::{Engine, FinalSelection, WindowReport};
use crate::error::{Error, Result};
use crate::evolution::{CancelToken, IdleBudget};
use crate::io::{
    archive_snapshot, gen_blobs, tree_snapshot, windows, write_assignments, BlobSpec, CsvOptions,
    CsvPoints, MinMax, ReportWriter, SkipCounter,
};
use crate::chromosome::format_record;
use crate::model::{DataPoint, IdleMode, StreamConfig, WindowBatch};
use crate::seeders::SeederParams;

pub const REPORT_FILE: &str = "reports.jsonl";
pub const ASSIGNMENT_FILE: &str = "assignments.csv";
pub const CHROMOSOME_FILE: &str = "final_chromosome.txt";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Clone, Debug, PartialEq)]
pub enum InputSource {
    Csv { path: PathBuf, options: CsvOptions },
    Blobs(BlobSpec),
}

/// Everything a run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub source: InputSource,
    pub stream: StreamConfig,
    pub seeders: SeederParams,
    pub out_dir: PathBuf,
    pub snapshots: bool,
    /// Scale features to [0, 1] using the ranges seen in the first window.
    pub minmax: bool,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub reports: Vec<WindowReport>,
    pub selection: FinalSelection,
    pub skipped_rows: u64,
}

type PointSource = Box<dyn Iterator<Item = Result<DataPoint>> + Send>;

fn open_source(manifest: &RunManifest) -> Result<(PointSource, SkipCounter)> {
    match &manifest.source {
        InputSource::Csv { path, options } => {
            let points = CsvPoints::open(path, options.clone())?;
            let skipped = points.skipped();
            Ok((Box::new(points), skipped))
        }
        InputSource::Blobs(spec) => {
            let spec = BlobSpec {
                window_size: manifest.stream.window_size,
                ..spec.clone()
            };
            Ok((Box::new(gen_blobs(spec)?), SkipCounter::default()))
        }
    }
}

/// Writes reports and optional snapshots as windows complete.
struct Sink {
    out_dir: PathBuf,
    snapshots: bool,
    writer: ReportWriter,
    reports: Vec<WindowReport>,
}

impl Sink {
    fn new(manifest: &RunManifest) -> Result<Self> {
        Ok(Sink {
            out_dir: manifest.out_dir.clone(),
            snapshots: manifest.snapshots,
            writer: ReportWriter::create(&manifest.out_dir.join(REPORT_FILE))?,
            reports: Vec::new(),
        })
    }

    fn emit(&mut self, engine: &Engine, report: WindowReport) -> Result<()> {
        self.writer.write(&report)?;
        if self.snapshots {
            let dir = self.out_dir.join(SNAPSHOT_DIR);
            let id = report.window_id;
            crate::io::write_file(&dir.join(format!("tree_w{id:06}.csv")), &tree_snapshot(engine.tree()))?;
            crate::io::write_file(
                &dir.join(format!("archive_w{id:06}.txt")),
                &archive_snapshot(engine.archive()),
            )?;
        }
        self.reports.push(report);
        Ok(())
    }

    fn finish(self, engine: &Engine, skipped_rows: u64) -> Result<RunSummary> {
        self.writer.finish()?;
        let selection = engine.finalize()?;
        write_assignments(&self.out_dir.join(ASSIGNMENT_FILE), &selection.assignments)?;
        crate::io::write_file(
            &self.out_dir.join(CHROMOSOME_FILE),
            &(format_record(&selection.chromosome) + "\n"),
        )?;
        Ok(RunSummary {
            reports: self.reports,
            selection,
            skipped_rows,
        })
    }
}

/// Runs the manifest to completion and writes every output file.
pub fn run(manifest: &RunManifest) -> Result<RunSummary> {
    manifest.stream.validate()?;
    manifest.seeders.validate()?;
    match manifest.stream.idle_mode {
        IdleMode::Deterministic => run_deterministic(manifest),
        IdleMode::WallClock => run_wall_clock(manifest),
    }
}

fn scaled(mut w: WindowBatch, scaler: &mut Option<MinMax>, enabled: bool) -> Result<WindowBatch> {
    if enabled {
        if scaler.is_none() {
            *scaler = Some(MinMax::fit(&w)?);
        }
        scaler.as_ref().expect("fitted").apply(&mut w);
    }
    Ok(w)
}

fn run_deterministic(manifest: &RunManifest) -> Result<RunSummary> {
    let (points, skipped) = open_source(manifest)?;
    let mut batches = windows(points, manifest.stream.window_size);
    let mut scaler = None;
    let first = batches.next().ok_or(Error::EmptyInput)??;
    let first = scaled(first, &mut scaler, manifest.minmax)?;
    let mut sink = Sink::new(manifest)?;
    let (mut engine, report) = Engine::initialize(first, manifest.stream.clone(), &manifest.seeders)?;
    sink.emit(&engine, report)?;
    let cap = manifest.stream.idle_generations_cap;
    for w in batches {
        engine.on_idle(IdleBudget::generations(cap))?;
        let w = scaled(w?, &mut scaler, manifest.minmax)?;
        let report = engine.process_window(w)?;
        sink.emit(&engine, report)?;
    }
    engine.on_idle(IdleBudget::generations(cap))?;
    sink.finish(&engine, skipped.get())
}

/// A producer thread releases one window every `interval_ms`; between
/// arrivals the engine evolves the archive until the generation cap, the
/// interval or the next arrival stops it.
fn run_wall_clock(manifest: &RunManifest) -> Result<RunSummary> {
    let (points, skipped) = open_source(manifest)?;
    let window_size = manifest.stream.window_size;
    let interval = Duration::from_millis(manifest.stream.interval_ms);
    let token = CancelToken::new();
    let (tx, rx) = mpsc::sync_channel::<Result<WindowBatch>>(1);
    let producer_token = token.clone();
    let producer = thread::spawn(move || {
        for (i, w) in windows(points, window_size).enumerate() {
            if i > 0 {
                thread::sleep(interval);
            }
            let stop = w.is_err();
            producer_token.cancel();
            if tx.send(w).is_err() || stop {
                break;
            }
        }
    });

    let result = (|| {
        let mut scaler = None;
        let first = rx.recv().map_err(|_| Error::EmptyInput)??;
        token.acknowledge();
        let first = scaled(first, &mut scaler, manifest.minmax)?;
        let mut sink = Sink::new(manifest)?;
        let (engine, report) = Engine::initialize(first, manifest.stream.clone(), &manifest.seeders)?;
        let mut engine = engine.with_cancel_token(token.clone());
        sink.emit(&engine, report)?;
        let budget = || IdleBudget {
            generations_remaining: manifest.stream.idle_generations_cap,
            wall_deadline: Some(Instant::now() + interval),
        };
        loop {
            engine.on_idle(budget())?;
            let Ok(w) = rx.recv() else { break };
            token.acknowledge();
            let w = scaled(w?, &mut scaler, manifest.minmax)?;
            let report = engine.process_window(w)?;
            sink.emit(&engine, report)?;
        }
        sink.finish(&engine, skipped.get())
    })();
    drop(rx);
    producer
        .join()
        .map_err(|_| Error::Precondition("stream producer panicked".into()))?;
    result
}

/// Convenience for tests and the CLI: the report file of a finished run.
pub fn report_path(out_dir: &Path) -> PathBuf {
    out_dir.join(REPORT_FILE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::read_reports;

    fn manifest(dir: &Path, mode: IdleMode) -> RunManifest {
        let stream = StreamConfig {
            idle_mode: mode,
            interval_ms: 5,
            idle_generations_cap: 2,
            ..StreamConfig::default()
        };
        RunManifest {
            source: InputSource::Blobs(BlobSpec::new(3, 100, 10.0, 0.5, 4)),
            stream,
            seeders: SeederParams {
                dbscan_radius: 1.0,
                ..SeederParams::default()
            },
            out_dir: dir.to_path_buf(),
            snapshots: true,
            minmax: false,
        }
    }

    #[test]
    fn deterministic_run_writes_everything() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path(), IdleMode::Deterministic);
        let summary = run(&m).unwrap();
        assert_eq!(summary.reports.len(), 3);
        assert_eq!(read_reports(&report_path(dir.path())).unwrap(), summary.reports);
        let assignments = std::fs::read_to_string(dir.path().join(ASSIGNMENT_FILE)).unwrap();
        assert_eq!(assignments.lines().count(), 101);
        assert!(dir.path().join(SNAPSHOT_DIR).join("tree_w000002.csv").exists());
        assert!(dir.path().join(SNAPSHOT_DIR).join("archive_w000000.txt").exists());
        assert!(dir.path().join(CHROMOSOME_FILE).exists());
    }

    #[test]
    fn no_snapshots_when_disabled() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path(), IdleMode::Deterministic);
        m.snapshots = false;
        run(&m).unwrap();
        assert!(!dir.path().join(SNAPSHOT_DIR).exists());
    }

    #[test]
    fn wall_clock_run_completes_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run(&manifest(dir.path(), IdleMode::WallClock)).unwrap();
        let ids: Vec<u64> = summary.reports.iter().map(|r| r.window_id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert!(summary.reports.iter().all(|r| r.elapsed_ms.is_some()));
    }

    #[test]
    fn csv_source_with_minmax() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.csv");
        let text: String = (0..150)
            .map(|i| format!("{},{},{}\n", (i % 3) * 100 + i % 7, (i % 3) * 50, i % 3))
            .collect();
        std::fs::write(&data, text).unwrap();
        let mut m = manifest(&dir.path().join("out"), IdleMode::Deterministic);
        m.source = InputSource::Csv {
            path: data,
            options: CsvOptions {
                label_col: Some(2),
                ..CsvOptions::default()
            },
        };
        m.minmax = true;
        m.seeders.dbscan_radius = 0.1;
        let summary = run(&m).unwrap();
        assert_eq!(summary.reports.len(), 2);
        assert!(summary.reports[1].nmi.is_some());
        let max = summary.selection.solution.prototypes().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(max < 2.0);
    }

    #[test]
    fn missing_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest(dir.path(), IdleMode::Deterministic);
        m.source = InputSource::Csv {
            path: dir.path().join("nope.csv"),
            options: CsvOptions::default(),
        };
        let err = run(&m).unwrap_err();
        assert!(err.to_string().contains("nope.csv"));
    }
}
