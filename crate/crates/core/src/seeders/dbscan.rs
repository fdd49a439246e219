use std::cmp::Ordering;

use super::{finish, mean_of};
use crate::error::{Error, Result};
use crate::model::{squared_euclidean, ClusteringSolution, Origin, WindowBatch};

/// Output of [`seed_dbscan`]. `degenerate` is set when no dense cluster
/// formed and the solution is the single window mean.
#[derive(Clone, Debug, PartialEq)]
pub struct DbscanSeed {
    pub solution: ClusteringSolution,
    pub degenerate: bool,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Density clustering with brute-force neighbourhoods (a point counts itself).
///
/// Core points within `radius` of each other share a cluster. A border
/// point joins the cluster of its nearest core point, ties broken by the
/// lexicographically smaller core coordinates, so memberships do not depend
/// on input order. Clusters are ordered by their smallest member and noise
/// is dropped.
pub fn seed_dbscan(window: &WindowBatch, min_pts: usize, radius: f64) -> Result<DbscanSeed> {
    if window.is_empty() {
        return Err(Error::EmptyInput);
    }
    if min_pts == 0 || !(radius > 0.0) {
        return Err(Error::Precondition(
            "dbscan needs min_pts >= 1 and a positive radius".into(),
        ));
    }
    let d = window.dim()?;
    let pts: Vec<&[f64]> = window.points.iter().map(|p| p.coords.as_slice()).collect();
    let n = pts.len();
    let r2 = radius * radius;
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| squared_euclidean(pts[i], pts[j]) <= r2).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    // connected components of the core graph
    let mut label = vec![usize::MAX; n];
    let mut n_clusters = 0;
    for start in 0..n {
        if !core[start] || label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = n_clusters;
        while let Some(i) = stack.pop() {
            for &j in &neighbours[i] {
                if core[j] && label[j] == usize::MAX {
                    label[j] = n_clusters;
                    stack.push(j);
                }
            }
        }
        n_clusters += 1;
    }

    if n_clusters == 0 {
        log::warn!("dbscan formed no cluster; falling back to the window mean");
        let centre = mean_of(sorted(pts.clone()), d);
        let solution = finish(window, vec![centre], vec![n], Origin::Dbscan)?;
        return Ok(DbscanSeed {
            solution,
            degenerate: true,
        });
    }

    for i in 0..n {
        if core[i] {
            continue;
        }
        let owner = neighbours[i]
            .iter()
            .filter(|&&j| core[j])
            .min_by(|&&a, &&b| {
                squared_euclidean(pts[i], pts[a])
                    .total_cmp(&squared_euclidean(pts[i], pts[b]))
                    .then_with(|| lex(pts[a], pts[b]))
            });
        if let Some(&j) = owner {
            label[i] = label[j];
        }
    }

    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); n_clusters];
    for (i, &l) in label.iter().enumerate() {
        if l != usize::MAX {
            members[l].push(pts[i]);
        }
    }
    let mut members: Vec<Vec<&[f64]>> = members.into_iter().map(sorted).collect();
    members.sort_by(|a, b| lex(a[0], b[0]));
    let counts = members.iter().map(Vec::len).collect();
    let centres = members.into_iter().map(|m| mean_of(m, d)).collect();
    Ok(DbscanSeed {
        solution: finish(window, centres, counts, Origin::Dbscan)?,
        degenerate: false,
    })
}

/// Members in lexicographic order so that sums do not depend on input order.
fn sorted(mut v: Vec<&[f64]>) -> Vec<&[f64]> {
    v.sort_by(|a, b| lex(a, b));
    v
}
