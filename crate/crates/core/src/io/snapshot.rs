use std::path::Path;

use super::write_file;
use crate::anttree::{SnapshotRecord, TreeSynopsis};
use crate::chromosome::{decode_line, format_record, serialize_chromosome};
use crate::error::{Error, Result};
use crate::model::ClusteringSolution;
use crate::objectives::ParetoArchive;

/// Tree snapshot text: a header `node_id,parent_id,count,weight,w0..w{d-1}`
/// and one line per non-support node in id order. The support is node 0.
pub fn tree_snapshot(tree: &TreeSynopsis) -> String {
    let d = tree.dim();
    let mut out = String::from("node_id,parent_id,count,weight");
    for j in 0..d {
        out.push_str(&format!(",w{j}"));
    }
    out.push('\n');
    for r in tree.snapshot_records() {
        out.push_str(&format!("{},{},", r.node_id, r.parent_id));
        let mut values = vec![r.count, r.weight];
        values.extend_from_slice(&r.prototype);
        out.push_str(&format_record(&values));
        out.push('\n');
    }
    out
}

/// Inverse of [`tree_snapshot`].
pub fn parse_tree_snapshot(text: &str) -> Result<Vec<SnapshotRecord>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 5 || columns[..4] != ["node_id", "parent_id", "count", "weight"] {
        return Err(Error::Parse {
            line: 1,
            message: "bad tree snapshot header".into(),
        });
    }
    let width = columns.len();
    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::RaggedRow {
                line: line_no,
                expected: width,
                found: fields.len(),
            });
        }
        let id = |s: &str| {
            s.trim().parse::<u64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad node id {s:?}"),
            })
        };
        let mut reals = Vec::with_capacity(width - 2);
        for f in &fields[2..] {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("not a number: {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "non-finite value".into(),
                });
            }
            reals.push(v);
        }
        out.push(SnapshotRecord {
            node_id: id(fields[0])?,
            parent_id: id(fields[1])?,
            count: reals[0],
            weight: reals[1],
            prototype: reals[2..].to_vec(),
        });
    }
    Ok(out)
}

/// Archive snapshot text: one chromosome record per member, in archive order.
pub fn archive_snapshot(archive: &ParetoArchive) -> String {
    archive
        .solutions()
        .iter()
        .map(|s| format_record(&serialize_chromosome(s)) + "\n")
        .collect()
}

pub fn parse_archive_snapshot(text: &str, d: usize) -> Result<Vec<ClusteringSolution>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            decode_line(l, d).map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse {
                    line: i as u64 + 1,
                    message,
                },
                other => other,
            })
        })
        .collect()
}

/// Writes `index,cluster` rows under a header line.
pub fn write_assignments(path: &Path, rows: &[(u64, usize)]) -> Result<()> {
    let mut out = String::from("index,cluster\n");
    for (i, c) in rows {
        out.push_str(&format!("{i},{c}\n"));
    }
    write_file(path, &out)
}

pub fn parse_assignments(text: &str) -> Result<Vec<(u64, usize)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "index,cluster")) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header index,cluster".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = || Error::Parse {
                line: i as u64 + 1,
                message: format!("bad assignment row {l:?}"),
            };
            let (a, b) = l.split_once(',').ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anttree::AntTree;
    use crate::model::{DataPoint, WindowBatch};

    fn tree() -> TreeSynopsis {
        let pts = (0..30)
            .map(|i| DataPoint::new(vec![(i % 3) as f64 * 5.0 + i as f64 * 0.01, 0.5], None, i))
            .collect();
        AntTree::build(&WindowBatch::new(pts, 0), 10).unwrap().aggregate(2).0
    }

    #[test]
    fn tree_round_trip() {
        let t = tree();
        let text = tree_snapshot(&t);
        assert!(text.starts_with("node_id,parent_id,count,weight,w0,w1\n"));
        let back = parse_tree_snapshot(&text).unwrap();
        assert_eq!(back, t.snapshot_records());
    }

    #[test]
    fn tree_snapshot_errors() {
        assert!(parse_tree_snapshot("").is_err());
        assert!(parse_tree_snapshot("a,b,c,d,e\n").is_err());
        let bad = "node_id,parent_id,count,weight,w0\n1,0,1,1\n";
        assert!(matches!(parse_tree_snapshot(bad), Err(Error::RaggedRow { line: 2, .. })));
        let nan = "node_id,parent_id,count,weight,w0\n1,0,1,1,NaN\n";
        assert!(parse_tree_snapshot(nan).is_err());
    }

    #[test]
    fn archive_round_trip() {
        let mut a = ParetoArchive::new(None);
        let mut s = tree().macro_clusters(crate::model::SolutionId(0)).unwrap();
        s.objectives = crate::model::ObjectiveVector::new(2.5, 1.25);
        a.insert(s.clone());
        let text = archive_snapshot(&a);
        let back = parse_archive_snapshot(&text, 2).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].objectives, s.objectives);
        assert_eq!(back[0].clusters[0].prototype, s.clusters[0].prototype);
    }

    #[test]
    fn assignments_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("assignments.csv");
        let rows = vec![(100, 0), (101, 3), (102, 1)];
        write_assignments(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "index,cluster\n100,0\n101,3\n102,1\n");
        assert_eq!(parse_assignments(&text).unwrap(), rows);
        assert!(parse_assignments("x\n").is_err());
    }
}
