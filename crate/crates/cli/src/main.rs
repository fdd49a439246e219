//! `mocstream`: cluster a CSV file or a synthetic blob stream window by window.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mocstream::io::{BlobSpec, CsvOptions};
use mocstream::model::{IdleMode, StreamConfig};
use mocstream::runner::{run, InputSource, RunManifest, ASSIGNMENT_FILE, REPORT_FILE};
use mocstream::seeders::SeederParams;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    /// Run exactly --idle-gens generations between windows.
    Deterministic,
    /// Release one window every --interval-ms and evolve until it arrives.
    WallClock,
}

#[derive(Debug, Parser)]
#[command(name = "mocstream", version, about)]
struct Args {
    /// CSV file of numeric features.
    #[arg(long, conflicts_with = "blobs", required_unless_present = "blobs")]
    input: Option<PathBuf>,
    /// Synthetic Gaussian blobs: K,PER_BLOB,SEP,STDDEV.
    #[arg(long, value_parser = parse_blobs)]
    blobs: Option<BlobSpec>,
    /// Dimension of generated blobs.
    #[arg(long, default_value_t = 2, requires = "blobs")]
    blob_dim: usize,
    /// Per-window centre drift for generated blobs, comma separated.
    #[arg(long, value_delimiter = ',', requires = "blobs")]
    drift: Option<Vec<f64>>,
    /// Zero-based CSV column holding ground-truth labels.
    #[arg(long)]
    label_col: Option<usize>,
    /// CSV field delimiter.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Skip the first CSV row.
    #[arg(long)]
    header: bool,
    /// Points per window.
    #[arg(long, default_value_t = 100)]
    window: usize,
    /// Fading factor applied once per window.
    #[arg(long, default_value_t = 0.7)]
    gamma: f64,
    /// Mutation rate.
    #[arg(long, default_value_t = 0.2)]
    mu: f64,
    /// Parents selected per generation.
    #[arg(long, default_value_t = 10)]
    sigma: usize,
    /// Maximum daughters per tree node.
    #[arg(long, default_value_t = 10)]
    lmax: usize,
    /// Weight below which tree leaves and clusters are pruned.
    #[arg(long, default_value_t = 0.1)]
    prune: f64,
    /// Milliseconds between window arrivals in wall-clock mode.
    #[arg(long, default_value_t = 1000)]
    interval_ms: u64,
    /// Generation cap per idle period.
    #[arg(long, default_value_t = 10)]
    idle_gens: usize,
    #[arg(long, value_enum, default_value_t = Mode::Deterministic)]
    idle_mode: Mode,
    /// Seed for every random choice of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Archive capacity; 0 leaves the archive unbounded.
    #[arg(long, default_value_t = 50)]
    capacity: usize,
    /// DBSCAN neighbourhood radius used by the seeding stage.
    #[arg(long, default_value_t = 10.0)]
    dbscan_radius: f64,
    /// Neighbours a DBSCAN core point needs.
    #[arg(long, default_value_t = 20)]
    dbscan_min_pts: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write tree and archive snapshots after every window.
    #[arg(long)]
    snapshots: bool,
    /// Scale features to [0, 1] using the first window's ranges.
    #[arg(long)]
    minmax: bool,
}

fn parse_blobs(s: &str) -> Result<BlobSpec, String> {
    s.parse().map_err(|e: mocstream::Error| e.to_string())
}

impl Args {
    fn manifest(self) -> Result<RunManifest, String> {
        let source = match (self.input, self.blobs) {
            (Some(path), None) => {
                if !self.delimiter.is_ascii() {
                    return Err(format!("delimiter {:?} is not a single byte", self.delimiter));
                }
                InputSource::Csv {
                    path,
                    options: CsvOptions {
                        delimiter: self.delimiter as u8,
                        has_header: self.header,
                        label_col: self.label_col,
                    },
                }
            }
            (None, Some(spec)) => InputSource::Blobs(BlobSpec {
                dim: self.blob_dim,
                drift: self.drift,
                seed: self.seed,
                ..spec
            }),
            _ => return Err("exactly one of --input and --blobs is required".into()),
        };
        let stream = StreamConfig {
            window_size: self.window,
            gamma: self.gamma,
            mu: self.mu,
            sigma: self.sigma,
            prune_threshold: self.prune,
            interval_ms: self.interval_ms,
            idle_generations_cap: self.idle_gens,
            idle_mode: match self.idle_mode {
                Mode::Deterministic => IdleMode::Deterministic,
                Mode::WallClock => IdleMode::WallClock,
            },
            rng_seed: self.seed,
            l_max: self.lmax,
            archive_capacity: (self.capacity > 0).then_some(self.capacity),
            ..StreamConfig::default()
        };
        Ok(RunManifest {
            source,
            stream,
            seeders: SeederParams {
                dbscan_radius: self.dbscan_radius,
                dbscan_min_pts: self.dbscan_min_pts,
                ..SeederParams::default()
            },
            out_dir: self.out,
            snapshots: self.snapshots,
            minmax: self.minmax,
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let out = args.out.clone();
    let manifest = match args.manifest() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&manifest) {
        Ok(summary) => {
            let last = summary.reports.last().expect("at least one window");
            println!("windows: {}", summary.reports.len());
            println!("archive: {}", last.archive_size);
            println!("selected K: {}", summary.selection.solution.k());
            println!("selected DBI: {}", summary.selection.dbi);
            if let (Some(nmi), Some(arand)) = (last.nmi, last.arand) {
                println!("last window NMI: {nmi:.4} ARAND: {arand:.4}");
            }
            if summary.skipped_rows > 0 {
                println!("skipped non-finite rows: {}", summary.skipped_rows);
            }
            println!("reports: {}", out.join(REPORT_FILE).display());
            println!("assignments: {}", out.join(ASSIGNMENT_FILE).display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_is_well_formed() {
        Args::command().debug_assert();
    }

    #[test]
    fn defaults_match_stream_config() {
        let m = Args::parse_from(["mocstream", "--blobs", "2,50,10,0.5"]).manifest().unwrap();
        let d = StreamConfig::default();
        assert_eq!(m.stream.gamma, d.gamma);
        assert_eq!(m.stream.mu, d.mu);
        assert_eq!(m.stream.sigma, d.sigma);
        assert_eq!(m.stream.l_max, d.l_max);
        assert_eq!(m.stream.prune_threshold, d.prune_threshold);
        assert_eq!(m.stream.window_size, d.window_size);
        assert_eq!(m.stream.archive_capacity, d.archive_capacity);
        assert_eq!(m.seeders, SeederParams::default());
    }

    #[test]
    fn input_and_blobs_conflict() {
        let r = Args::try_parse_from(["mocstream", "--blobs", "2,50,10,0.5", "--input", "x.csv"]);
        assert!(r.is_err());
        assert!(Args::try_parse_from(["mocstream"]).is_err());
    }

    #[test]
    fn bad_blob_spec_is_rejected() {
        assert!(Args::try_parse_from(["mocstream", "--blobs", "2,50,10"]).is_err());
    }

    #[test]
    fn zero_capacity_means_unbounded() {
        let m = Args::parse_from(["mocstream", "--blobs", "2,50,10,0.5", "--capacity", "0"])
            .manifest()
            .unwrap();
        assert_eq!(m.stream.archive_capacity, None);
    }
}
