//! External (NMI, adjusted Rand) and internal (Davies–Bouldin) validity
//! indices, and final-solution selection.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{euclidean, ClusteringSolution, WindowBatch};
use crate::objectives::{assign, ParetoArchive};

/// Cross-tabulation of two partitions of the same `n` items.
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyMatrix {
    /// `counts[i][j]`: items in row class `i` and column class `j`.
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

impl ContingencyMatrix {
    pub fn new<A: Ord + Copy, B: Ord + Copy>(rows: &[A], cols: &[B]) -> Result<Self> {
        if rows.len() != cols.len() {
            return Err(Error::LabelLengthMismatch {
                left: rows.len(),
                right: cols.len(),
            });
        }
        let (ri, ci) = (class_index(rows), class_index(cols));
        let mut counts = vec![vec![0u64; ci.len()]; ri.len()];
        for (a, b) in rows.iter().zip(cols) {
            counts[ri[a]][ci[b]] += 1;
        }
        let row_sums: Vec<u64> = counts.iter().map(|row| row.iter().sum()).collect();
        let col_sums: Vec<u64> = (0..ci.len())
            .map(|j| counts.iter().map(|row| row[j]).sum())
            .collect();
        Ok(ContingencyMatrix {
            counts,
            row_sums,
            col_sums,
            total: rows.len() as u64,
        })
    }
}

/// Distinct labels in ascending order, mapped to dense indices.
fn class_index<T: Ord + Copy>(labels: &[T]) -> BTreeMap<T, usize> {
    let mut index: BTreeMap<T, usize> = labels.iter().map(|&l| (l, 0)).collect();
    for (i, slot) in index.values_mut().enumerate() {
        *slot = i;
    }
    index
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    -sums
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Normalized mutual information `2 I(Y;C) / (H(Y) + H(C))`, natural log.
/// Two single-class partitions score 1.
pub fn nmi<A: Ord + Copy, B: Ord + Copy>(truth: &[A], predicted: &[B]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Precondition("nmi needs at least one label".into()));
    }
    let m = ContingencyMatrix::new(truth, predicted)?;
    let n = m.total as f64;
    let h_y = entropy(&m.row_sums, n);
    let h_c = entropy(&m.col_sums, n);
    if h_y + h_c == 0.0 {
        return Ok(1.0);
    }
    // H(Y|C) = -sum_ij p_ij ln(n_ij / b_j)
    let mut h_y_given_c = 0.0;
    for row in &m.counts {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                h_y_given_c -= (nij as f64 / n) * (nij as f64 / m.col_sums[j] as f64).ln();
            }
        }
    }
    let mutual = h_y - h_y_given_c;
    Ok((2.0 * mutual / (h_y + h_c)).clamp(0.0, 1.0))
}

fn choose2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index over the contingency table. A zero denominator only
/// happens when both partitions are trivial in the same way, scored 1.
pub fn arand<A: Ord + Copy, B: Ord + Copy>(truth: &[A], predicted: &[B]) -> Result<f64> {
    if truth.len() < 2 || predicted.len() < 2 {
        if truth.len() != predicted.len() {
            return Err(Error::LabelLengthMismatch {
                left: truth.len(),
                right: predicted.len(),
            });
        }
        return Err(Error::Precondition("arand needs at least two labels".into()));
    }
    let m = ContingencyMatrix::new(truth, predicted)?;
    let index: f64 = m.counts.iter().flatten().map(|&x| choose2(x)).sum();
    let a: f64 = m.row_sums.iter().map(|&x| choose2(x)).sum();
    let b: f64 = m.col_sums.iter().map(|&x| choose2(x)).sum();
    let expected = a * b / choose2(m.total);
    let max = 0.5 * (a + b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Windowed Davies–Bouldin index of `solution` given an assignment of the
/// window points. Clusters that received no point are left out; fewer than
/// two populated clusters, or two populated clusters sharing a prototype,
/// give `+inf`.
pub fn davies_bouldin(
    solution: &ClusteringSolution,
    window: &WindowBatch,
    assignment: &[usize],
) -> Result<f64> {
    if assignment.len() != window.len() {
        return Err(Error::Precondition(format!(
            "assignment covers {} of {} points",
            assignment.len(),
            window.len()
        )));
    }
    let k = solution.k();
    let mut scatter = vec![0.0; k];
    let mut members = vec![0usize; k];
    for (p, &c) in window.points.iter().zip(assignment) {
        let proto = &solution
            .clusters
            .get(c)
            .ok_or_else(|| Error::Precondition(format!("cluster {c} out of range")))?
            .prototype;
        scatter[c] += euclidean(&p.coords, proto);
        members[c] += 1;
    }
    let populated: Vec<usize> = (0..k).filter(|&c| members[c] > 0).collect();
    if populated.len() < 2 {
        return Ok(f64::INFINITY);
    }
    for &c in &populated {
        scatter[c] /= members[c] as f64;
    }
    let mut total = 0.0;
    for &i in &populated {
        let mut worst: f64 = 0.0;
        for &j in &populated {
            if i == j {
                continue;
            }
            let sep = euclidean(&solution.clusters[i].prototype, &solution.clusters[j].prototype);
            if sep == 0.0 {
                return Ok(f64::INFINITY);
            }
            worst = worst.max((scatter[i] + scatter[j]) / sep);
        }
        total += worst;
    }
    Ok(total / populated.len() as f64)
}

/// Member with the lowest windowed Davies–Bouldin index; ties go to fewer
/// clusters, then to the lower solution id.
pub fn select_best<'a>(
    archive: &'a ParetoArchive,
    window: &WindowBatch,
) -> Result<(&'a ClusteringSolution, f64)> {
    let mut best: Option<(&ClusteringSolution, f64)> = None;
    for s in archive.solutions() {
        let dbi = davies_bouldin(s, window, &assign(s, window))?;
        let better = match best {
            None => true,
            Some((b, bd)) => {
                dbi.total_cmp(&bd)
                    .then(s.k().cmp(&b.k()))
                    .then(s.id.cmp(&b.id))
                    .is_lt()
            }
        };
        if better {
            best = Some((s, dbi));
        }
    }
    best.ok_or_else(|| Error::Precondition("archive is empty".into()))
}
