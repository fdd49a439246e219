//! Stream sources (CSV files, synthetic blobs) and the on-disk formats of
//! reports, snapshots and final assignments.

mod blobs;
mod csv_source;
mod report;
mod snapshot;

pub use blobs::{gen_blobs, BlobSpec, BlobStream};
pub use csv_source::{CsvOptions, CsvPoints, SkipCounter};
pub use report::{parse_report_line, read_reports, write_report_line, ReportWriter};
pub use snapshot::{
    archive_snapshot, parse_archive_snapshot, parse_assignments, parse_tree_snapshot,
    tree_snapshot, write_assignments,
};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{DataPoint, WindowBatch};

/// Chunks a point stream into consecutive windows of `size` points (the
/// last one may be shorter). The first error ends the stream.
pub fn windows<I>(points: I, size: usize) -> Windows<I::IntoIter>
where
    I: IntoIterator<Item = Result<DataPoint>>,
{
    Windows {
        inner: points.into_iter(),
        size: size.max(1),
        next_id: 0,
        done: false,
    }
}

pub struct Windows<I> {
    inner: I,
    size: usize,
    next_id: u64,
    done: bool,
}

impl<I: Iterator<Item = Result<DataPoint>>> Iterator for Windows<I> {
    type Item = Result<WindowBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut points = Vec::with_capacity(self.size);
        while points.len() < self.size {
            match self.inner.next() {
                Some(Ok(p)) => points.push(p),
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                None => {
                    self.done = true;
                    break;
                }
            }
        }
        if points.is_empty() {
            return None;
        }
        let w = WindowBatch::new(points, self.next_id);
        self.next_id += 1;
        Some(Ok(w))
    }
}

/// Per-feature min-max scaling fitted on one window. Constant features map
/// to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(window: &WindowBatch) -> Result<Self> {
        let d = window.dim()?;
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for p in &window.points {
            for (j, &x) in p.coords.iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        Ok(MinMax { min, max })
    }

    pub fn apply(&self, window: &mut WindowBatch) {
        for p in &mut window.points {
            for ((x, lo), hi) in p.coords.iter_mut().zip(&self.min).zip(&self.max) {
                let range = hi - lo;
                *x = if range > 0.0 { (*x - lo) / range } else { 0.0 };
            }
        }
    }
}

/// Writes `contents` to `path`, creating parent directories.
pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(n: usize) -> Vec<Result<DataPoint>> {
        (0..n).map(|i| Ok(DataPoint::new(vec![i as f64], None, i as u64))).collect()
    }

    #[test]
    fn chunking() {
        let sizes: Vec<usize> = windows(pts(250), 100).map(|w| w.unwrap().len()).collect();
        assert_eq!(sizes, vec![100, 100, 50]);
        let ids: Vec<u64> = windows(pts(250), 100).map(|w| w.unwrap().window_id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(windows(pts(0), 10).count(), 0);
    }

    #[test]
    fn errors_end_the_stream() {
        let mut v = pts(5);
        v.insert(2, Err(Error::EmptyInput));
        let out: Vec<_> = windows(v, 10).collect();
        assert_eq!(out.len(), 1);
        assert!(out[0].is_err());
    }

    #[test]
    fn minmax_scaling() {
        let mut w = WindowBatch::new(
            vec![
                DataPoint::new(vec![0.0, 5.0], None, 0),
                DataPoint::new(vec![10.0, 5.0], None, 1),
            ],
            0,
        );
        let m = MinMax::fit(&w).unwrap();
        m.apply(&mut w);
        assert_eq!(w.points[0].coords, vec![0.0, 0.0]);
        assert_eq!(w.points[1].coords, vec![1.0, 0.0]);
    }
}
