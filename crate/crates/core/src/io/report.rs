use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::engine::WindowReport;
use crate::error::{Error, Result};

/// One JSON object, no trailing newline.
pub fn write_report_line(report: &WindowReport) -> Result<String> {
    Ok(serde_json::to_string(report)?)
}

pub fn parse_report_line(line: &str) -> Result<WindowReport> {
    Ok(serde_json::from_str(line.trim_end_matches(['\n', '\r']))?)
}

/// Reads a whole report file. Blank lines are ignored.
pub fn read_reports(path: &Path) -> Result<Vec<WindowReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_report_line(l).map_err(|e| Error::Parse {
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Appends reports to a file as they are produced, one per line.
pub struct ReportWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ReportWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(ReportWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, report: &WindowReport) -> Result<()> {
        let line = write_report_line(report)?;
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: u64) -> WindowReport {
        WindowReport {
            window_id: id,
            archive_size: 12,
            best_dbi: Some(0.123456789012345),
            best_k: 4,
            best_fitness: -3.25,
            nmi: Some(1.0 / 3.0),
            arand: None,
            hypervolume: 1234.5678,
            hv_reference: [99.1, 0.0],
            stored_vectors: 80,
            tree_nodes: 20,
            elapsed_ms: None,
        }
    }

    #[test]
    fn line_round_trip_is_exact() {
        let r = sample(3);
        let line = write_report_line(&r).unwrap();
        assert!(!line.contains('\n'));
        assert_eq!(parse_report_line(&line).unwrap(), r);
        assert!(line.contains("\"best_dbi\":0.123456789012345"));
        assert!(line.contains("\"arand\":null"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/reports.jsonl");
        let mut w = ReportWriter::create(&path).unwrap();
        for i in 0..40 {
            w.write(&sample(i)).unwrap();
        }
        w.finish().unwrap();
        let back = read_reports(&path).unwrap();
        assert_eq!(back.len(), 40);
        assert_eq!(back[39], sample(39));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(parse_report_line("{").is_err());
        assert!(parse_report_line("{\"window_id\":1}").is_err());
    }
}
