use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::DataPoint;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Column holding the ground-truth label, if any. Labels are arbitrary
    /// strings, numbered in order of first appearance.
    pub label_col: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            has_header: false,
            label_col: None,
        }
    }
}

/// Shared count of rows skipped for holding non-finite values.
#[derive(Clone, Debug, Default)]
pub struct SkipCounter(Arc<AtomicU64>);

impl SkipCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

/// Streaming CSV reader yielding one point per row. Only the current row is
/// held in memory.
pub struct CsvPoints<R> {
    reader: csv::Reader<R>,
    record: csv::StringRecord,
    options: CsvOptions,
    width: Option<usize>,
    labels: HashMap<String, i64>,
    next_index: u64,
    skipped: SkipCounter,
    done: bool,
}

impl CsvPoints<File> {
    pub fn open(path: &Path, options: CsvOptions) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_reader(file, options))
    }
}

impl<R: Read> CsvPoints<R> {
    pub fn from_reader(source: R, options: CsvOptions) -> Self {
        let reader = csv::ReaderBuilder::new()
            .delimiter(options.delimiter)
            .has_headers(options.has_header)
            .flexible(true)
            .from_reader(source);
        CsvPoints {
            reader,
            record: csv::StringRecord::new(),
            options,
            width: None,
            labels: HashMap::new(),
            next_index: 0,
            skipped: SkipCounter::default(),
            done: false,
        }
    }

    pub fn skipped(&self) -> SkipCounter {
        self.skipped.clone()
    }

    fn parse_row(&mut self) -> Result<Option<DataPoint>> {
        let line = self.record.position().map_or(0, |p| p.line());
        let found = self.record.len();
        let width = *self.width.get_or_insert(found);
        if found != width {
            return Err(Error::RaggedRow {
                line,
                expected: width,
                found,
            });
        }
        if let Some(col) = self.options.label_col {
            if col >= width {
                return Err(Error::LabelColumnOutOfRange { col, width });
            }
        }
        let n_features = width - usize::from(self.options.label_col.is_some());
        if n_features == 0 {
            return Err(Error::Parse {
                line,
                message: "row has no feature columns".into(),
            });
        }
        let mut coords = Vec::with_capacity(n_features);
        let mut label = None;
        let mut finite = true;
        for (j, field) in self.record.iter().enumerate() {
            let field = field.trim();
            if Some(j) == self.options.label_col {
                let next = self.labels.len() as i64;
                label = Some(*self.labels.entry(field.to_string()).or_insert(next));
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {j}: not a number: {field:?}"),
            })?;
            finite &= v.is_finite();
            coords.push(v);
        }
        if !finite {
            log::warn!("line {line}: non-finite value, row skipped");
            self.skipped.bump();
            return Ok(None);
        }
        let p = DataPoint::new(coords, label, self.next_index);
        self.next_index += 1;
        Ok(Some(p))
    }
}

impl<R: Read> Iterator for CsvPoints<R> {
    type Item = Result<DataPoint>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            match self.reader.read_record(&mut self.record) {
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
                Ok(false) => {
                    self.done = true;
                    if self.next_index == 0 {
                        return Some(Err(Error::EmptyInput));
                    }
                }
                Ok(true) => {
                    match self.parse_row() {
                        Ok(Some(p)) => return Some(Ok(p)),
                        Ok(None) => continue,
                        Err(e) => {
                            self.done = true;
                            return Some(Err(e));
                        }
                    }
                }
            }
        }
        None
    }
}
