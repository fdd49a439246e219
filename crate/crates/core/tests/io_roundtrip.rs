use std::io::Write;

use mocstream::chromosome::serialize_chromosome;
use mocstream::engine::Engine;
use mocstream::evolution::IdleBudget;
use mocstream::io::{
    archive_snapshot, gen_blobs, parse_archive_snapshot, parse_tree_snapshot, read_reports,
    tree_snapshot, windows, BlobSpec, CsvOptions, CsvPoints, ReportWriter,
};
use mocstream::model::StreamConfig;
use mocstream::seeders::SeederParams;

fn seeders() -> SeederParams {
    SeederParams {
        dbscan_radius: 1.0,
        ..SeederParams::default()
    }
}

#[test]
fn report_file_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reports.jsonl");
    let cfg = StreamConfig::default();
    let mut it = windows(gen_blobs(BlobSpec::new(3, 400, 10.0, 0.5, 2)).unwrap(), 100).map(Result::unwrap);
    let (mut engine, first) = Engine::initialize(it.next().unwrap(), cfg, &seeders()).unwrap();
    let mut writer = ReportWriter::create(&path).unwrap();
    let mut expected = vec![first];
    for w in it {
        engine.on_idle(IdleBudget::generations(3)).unwrap();
        expected.push(engine.process_window(w).unwrap());
    }
    for r in &expected {
        writer.write(r).unwrap();
    }
    writer.finish().unwrap();
    let replayed = read_reports(&path).unwrap();
    assert_eq!(replayed.len(), 12);
    assert_eq!(replayed, expected);
    let metrics = |rs: &[mocstream::engine::WindowReport]| -> Vec<(Option<f64>, Option<f64>, f64)> {
        rs.iter().map(|r| (r.nmi, r.arand, r.hypervolume)).collect()
    };
    assert_eq!(metrics(&replayed), metrics(&expected));
}

#[test]
fn snapshots_round_trip_through_text() {
    let cfg = StreamConfig::default();
    let mut it = windows(gen_blobs(BlobSpec::new(2, 200, 10.0, 0.5, 9)).unwrap(), 100).map(Result::unwrap);
    let (mut engine, _) = Engine::initialize(it.next().unwrap(), cfg, &seeders()).unwrap();
    for w in it {
        engine.process_window(w).unwrap();
    }
    let records = parse_tree_snapshot(&tree_snapshot(engine.tree())).unwrap();
    assert_eq!(records, engine.tree().snapshot_records());
    assert_eq!(records.len(), engine.tree().node_count());

    let decoded = parse_archive_snapshot(&archive_snapshot(engine.archive()), 2).unwrap();
    let original: Vec<Vec<f64>> = engine.archive().solutions().iter().map(serialize_chromosome).collect();
    let again: Vec<Vec<f64>> = decoded.iter().map(serialize_chromosome).collect();
    assert_eq!(again, original);
}

#[test]
fn csv_rows_chunk_in_arrival_order() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    for i in 0..250 {
        writeln!(file, "{i},{}", i * 2).unwrap();
    }
    let points = CsvPoints::open(file.path(), CsvOptions::default()).unwrap();
    let batches: Vec<_> = windows(points, 100).map(Result::unwrap).collect();
    let sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
    assert_eq!(sizes, vec![100, 100, 50]);
    let firsts: Vec<f64> = batches.iter().map(|b| b.points[0].coords[0]).collect();
    assert_eq!(firsts, vec![0.0, 100.0, 200.0]);
    assert_eq!(batches.iter().map(|b| b.window_id).collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn non_finite_rows_are_counted_not_fatal() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write!(file, "1,2\nNaN,3\n4,inf\n5,6\n").unwrap();
    let points = CsvPoints::open(file.path(), CsvOptions::default()).unwrap();
    let skipped = points.skipped();
    let rows: Vec<_> = points.map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(skipped.get(), 2);
}
