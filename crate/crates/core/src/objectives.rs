//! The two streaming objectives, Pareto dominance, and the bounded archive
//! of mutually non-dominated solutions.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{nearest_index, ClusteringSolution, ObjectiveVector, WindowBatch};

/// Neighbourhood size used when a solution has no tree backing it.
pub const NEAREST_NEIGHBOURS: usize = 3;

/// Nearest-prototype index of every window point, in window order.
pub fn assign(solution: &ClusteringSolution, window: &WindowBatch) -> Vec<usize> {
    window
        .points
        .iter()
        .map(|p| nearest_index(solution.prototypes(), &p.coords).0)
        .collect()
}

/// Decayed compactness: `gamma * previous + sum of point-to-prototype
/// distances` over the window, using the prototypes as they are now. Each
/// cluster's `compactness_acc` is updated the same way.
pub fn update_compactness(
    solution: &mut ClusteringSolution,
    window: &WindowBatch,
    assignment: &[usize],
    gamma: f64,
) -> Result<f64> {
    if assignment.len() != window.len() {
        return Err(Error::Precondition(format!(
            "assignment covers {} of {} points",
            assignment.len(),
            window.len()
        )));
    }
    let mut per_cluster = vec![0.0; solution.k()];
    for (p, &c) in window.points.iter().zip(assignment) {
        let proto = &solution
            .clusters
            .get(c)
            .ok_or_else(|| Error::Precondition(format!("cluster {c} out of range")))?
            .prototype;
        per_cluster[c] += crate::model::euclidean(&p.coords, proto);
    }
    for (cluster, term) in solution.clusters.iter_mut().zip(&per_cluster) {
        cluster.compactness_acc = gamma * cluster.compactness_acc + term;
    }
    let value = gamma * solution.objectives.compactness + per_cluster.iter().sum::<f64>();
    Ok(value)
}

/// Objectives of a solution seen on a single window: plain distance sum and
/// nearest-neighbour separateness, with no history.
pub fn evaluate_first_window(solution: &mut ClusteringSolution, window: &WindowBatch) -> Result<()> {
    let assignment = assign(solution, window);
    solution.objectives = ObjectiveVector::default();
    for c in &mut solution.clusters {
        c.compactness_acc = 0.0;
    }
    let compactness = update_compactness(solution, window, &assignment, 1.0)?;
    solution.prior_compactness = 0.0;
    solution.objectives = ObjectiveVector::new(compactness, knn_separateness(solution));
    Ok(())
}

/// The `k` nearest other clusters of every cluster by prototype distance
/// (everyone else when `K <= k + 1`). Ties go to the lower index.
pub fn knn_neighbourhood(solution: &ClusteringSolution, k: usize) -> Vec<Vec<usize>> {
    let protos: Vec<&[f64]> = solution.prototypes().collect();
    (0..protos.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..protos.len())
                .filter(|&j| j != i)
                .map(|j| (crate::model::euclidean(protos[i], protos[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.truncate(k);
            others.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Every cluster neighbours every other one.
pub fn full_neighbourhood(k: usize) -> Vec<Vec<usize>> {
    (0..k).map(|i| (0..k).filter(|&j| j != i).collect()).collect()
}

/// Mean over clusters of the distance to the closest neighbouring prototype.
/// A single-cluster solution scores 0.
pub fn separateness(solution: &ClusteringSolution, neighbourhood: &[Vec<usize>]) -> Result<f64> {
    let k = solution.k();
    if k <= 1 {
        return Ok(0.0);
    }
    if neighbourhood.len() != k {
        return Err(Error::Precondition(format!(
            "neighbourhood covers {} of {k} clusters",
            neighbourhood.len()
        )));
    }
    let mut total = 0.0;
    for (c, neigh) in neighbourhood.iter().enumerate() {
        let best = neigh
            .iter()
            .filter(|&&n| n != c)
            .map(|&n| {
                solution
                    .clusters
                    .get(n)
                    .map(|other| {
                        crate::model::euclidean(&solution.clusters[c].prototype, &other.prototype)
                    })
                    .ok_or_else(|| Error::Precondition(format!("neighbour {n} out of range")))
            })
            .try_fold(f64::INFINITY, |acc, d| d.map(|d| acc.min(d)))?;
        if !best.is_finite() {
            return Err(Error::Precondition(format!(
                "cluster {c} has an empty neighbourhood"
            )));
        }
        total += best;
    }
    Ok(total / k as f64)
}

/// Separateness under the nearest-neighbour rule used for solutions with no
/// tree behind them.
pub fn knn_separateness(solution: &ClusteringSolution) -> f64 {
    let neigh = knn_neighbourhood(solution, NEAREST_NEIGHBOURS);
    separateness(solution, &neigh).expect("knn neighbourhood is well formed")
}

/// Pareto dominance in joint-minimization form `(compactness, -separateness)`.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    let (a, b) = (a.min_form(), b.min_form());
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    /// Inserted; `removed` members were dominated by it or evicted.
    Inserted { removed: usize },
    Dominated,
    Duplicate,
    /// The archive was full and the candidate would add less hypervolume than
    /// any evictable member.
    Rejected,
}

impl InsertOutcome {
    pub fn inserted(&self) -> bool {
        matches!(self, InsertOutcome::Inserted { .. })
    }
}

/// Set of mutually non-dominated solutions, optionally bounded.
///
/// When full, a candidate that dominates no member replaces the interior
/// member with the smallest exclusive hypervolume contribution, and only if
/// the candidate itself is interior and contributes strictly more. Boundary
/// members are never evicted. This keeps the dominated hypervolume
/// non-decreasing for every admissible reference point.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParetoArchive {
    solutions: Vec<ClusteringSolution>,
    capacity: Option<usize>,
}

impl ParetoArchive {
    pub fn new(capacity: Option<usize>) -> Self {
        ParetoArchive {
            solutions: Vec::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn solutions(&self) -> &[ClusteringSolution] {
        &self.solutions
    }

    /// Mutable access for in-place window updates; callers must run
    /// [`ParetoArchive::rescreen`] afterwards.
    pub(crate) fn solutions_mut(&mut self) -> &mut Vec<ClusteringSolution> {
        &mut self.solutions
    }

    pub fn insert(&mut self, candidate: ClusteringSolution) -> InsertOutcome {
        let obj = candidate.objectives;
        if self.solutions.iter().any(|s| s.objectives == obj) {
            return InsertOutcome::Duplicate;
        }
        if self.solutions.iter().any(|s| dominates(&s.objectives, &obj)) {
            return InsertOutcome::Dominated;
        }
        let before = self.solutions.len();
        self.solutions.retain(|s| !dominates(&obj, &s.objectives));
        let dominated_removed = before - self.solutions.len();

        match self.capacity {
            Some(cap) if self.solutions.len() >= cap => {
                match self.eviction_for(&obj) {
                    Some(victim) => {
                        self.solutions.remove(victim);
                        self.solutions.push(candidate);
                        InsertOutcome::Inserted {
                            removed: dominated_removed + 1,
                        }
                    }
                    None => {
                        // nothing was removed: a dominating candidate always
                        // frees a slot, so the archive is unchanged here
                        debug_assert_eq!(dominated_removed, 0);
                        InsertOutcome::Rejected
                    }
                }
            }
            _ => {
                self.solutions.push(candidate);
                InsertOutcome::Inserted {
                    removed: dominated_removed,
                }
            }
        }
    }

    /// Index of the member to evict so that `candidate` can enter, if any.
    fn eviction_for(&self, candidate: &ObjectiveVector) -> Option<usize> {
        // sort members plus candidate by compactness; on a non-dominated set
        // that also sorts by -separateness descending
        let mut order: Vec<(ObjectiveVector, Option<usize>)> = self
            .solutions
            .iter()
            .enumerate()
            .map(|(i, s)| (s.objectives, Some(i)))
            .collect();
        order.push((*candidate, None));
        order.sort_by(|a, b| cmp_front(&a.0, &b.0));
        let n = order.len();
        let pos = order.iter().position(|e| e.1.is_none()).expect("candidate present");
        if pos == 0 || pos == n - 1 || n < 3 {
            return None;
        }
        let contribution = |i: usize| {
            let (prev, cur, next) = (
                order[i - 1].0.min_form(),
                order[i].0.min_form(),
                order[i + 1].0.min_form(),
            );
            (next[0] - cur[0]) * (prev[1] - cur[1])
        };
        let cand = contribution(pos);
        let victim = (1..n - 1)
            .filter(|&i| i != pos)
            .min_by(|&a, &b| contribution(a).total_cmp(&contribution(b)))?;
        (contribution(victim) < cand).then(|| order[victim].1.expect("member"))
    }

    /// Drops members dominated by another member and duplicate objective
    /// vectors (first occurrence wins). Returns the number removed.
    pub fn rescreen(&mut self) -> usize {
        let before = self.solutions.len();
        let objs: Vec<ObjectiveVector> = self.solutions.iter().map(|s| s.objectives).collect();
        let keep: Vec<bool> = (0..objs.len())
            .map(|i| {
                !objs.iter().enumerate().any(|(j, o)| {
                    dominates(o, &objs[i]) || (j < i && *o == objs[i])
                })
            })
            .collect();
        let mut it = keep.iter();
        self.solutions.retain(|_| *it.next().expect("same length"));
        before - self.solutions.len()
    }

    /// True when no member dominates another.
    pub fn is_mutually_non_dominated(&self) -> bool {
        self.solutions.iter().all(|a| {
            self.solutions
                .iter()
                .all(|b| !dominates(&a.objectives, &b.objectives))
        })
    }
}

fn cmp_front(a: &ObjectiveVector, b: &ObjectiveVector) -> Ordering {
    let (a, b) = (a.min_form(), b.min_form());
    a[0].total_cmp(&b[0]).then(b[1].total_cmp(&a[1]))
}

/// Area dominated by the archive inside the box bounded by `reference`, both
/// in minimization form.
pub fn hypervolume(archive: &ParetoArchive, reference: &ObjectiveVector) -> Result<f64> {
    hypervolume_of(archive.solutions().iter().map(|s| s.objectives), reference)
}

pub fn hypervolume_of(
    points: impl IntoIterator<Item = ObjectiveVector>,
    reference: &ObjectiveVector,
) -> Result<f64> {
    let r = reference.min_form();
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for p in points {
        let m = p.min_form();
        if m[0] > r[0] || m[1] > r[1] {
            return Err(Error::OutsideReference {
                compactness: p.compactness,
                separateness: p.separateness,
            });
        }
        pts.push(m);
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut volume = 0.0;
    let mut ceiling = r[1];
    for p in pts {
        if p[1] < ceiling {
            volume += (r[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    Ok(volume)
}
