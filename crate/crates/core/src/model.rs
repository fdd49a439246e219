//! Shared domain types and the per-solution streaming primitives:
//! nearest-prototype assignment, prototype merging, fading and pruning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation of the stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub coords: Vec<f64>,
    pub label: Option<i64>,
    /// Monotone arrival counter.
    pub index: u64,
}

impl DataPoint {
    pub fn new(coords: Vec<f64>, label: Option<i64>, index: u64) -> Self {
        DataPoint {
            coords,
            label,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A chunk of consecutive stream points processed together.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    pub points: Vec<DataPoint>,
    pub window_id: u64,
}

impl WindowBatch {
    pub fn new(points: Vec<DataPoint>, window_id: u64) -> Self {
        WindowBatch { points, window_id }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dimensionality shared by every point, or an error if the points disagree.
    pub fn dim(&self) -> Result<usize> {
        let first = self.points.first().ok_or(Error::EmptyInput)?.dim();
        for p in &self.points {
            if p.dim() != first {
                return Err(Error::DimensionMismatch {
                    expected: first,
                    found: p.dim(),
                });
            }
        }
        Ok(first)
    }

    pub fn labels(&self) -> Option<Vec<i64>> {
        self.points.iter().map(|p| p.label).collect()
    }
}

/// One cluster of a solution: prototype plus its decayed bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub prototype: Vec<f64>,
    /// Decayed point count; real-valued because decay scales it.
    pub count: f64,
    pub weight: f64,
    /// This cluster's share of the compactness objective.
    pub compactness_acc: f64,
}

impl ClusterSummary {
    pub fn new(prototype: Vec<f64>, count: f64) -> Self {
        ClusterSummary {
            prototype,
            count,
            weight: count,
            compactness_acc: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.prototype.len()
    }
}

/// The two objectives: compactness is minimized, separateness maximized.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub compactness: f64,
    pub separateness: f64,
}

impl ObjectiveVector {
    pub fn new(compactness: f64, separateness: f64) -> Self {
        ObjectiveVector {
            compactness,
            separateness,
        }
    }

    /// Joint-minimization form `(compactness, -separateness)`.
    pub fn min_form(&self) -> [f64; 2] {
        [self.compactness, -self.separateness]
    }

    pub fn is_finite(&self) -> bool {
        self.compactness.is_finite() && self.separateness.is_finite()
    }
}

/// Which generator produced a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Anttree,
    Kmeans,
    Dbscan,
    Gng,
    Crossover,
    Mutation,
}

impl Origin {
    pub fn as_str(&self) -> &'static str {
        match self {
            Origin::Anttree => "anttree",
            Origin::Kmeans => "kmeans",
            Origin::Dbscan => "dbscan",
            Origin::Gng => "gng",
            Origin::Crossover => "crossover",
            Origin::Mutation => "mutation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SolutionId(pub u64);

/// A clustering solution (chromosome): objectives plus `K >= 1` clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringSolution {
    pub objectives: ObjectiveVector,
    pub clusters: Vec<ClusterSummary>,
    pub origin: Origin,
    pub id: SolutionId,
    /// Compactness before the most recent window term was added; offspring
    /// inherit it as their decayed history.
    pub prior_compactness: f64,
}

impl ClusteringSolution {
    pub fn new(clusters: Vec<ClusterSummary>, origin: Origin, id: SolutionId) -> Self {
        ClusteringSolution {
            objectives: ObjectiveVector::default(),
            clusters,
            origin,
            id,
            prior_compactness: 0.0,
        }
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn dim(&self) -> usize {
        self.clusters.first().map_or(0, ClusterSummary::dim)
    }

    pub fn prototypes(&self) -> impl Iterator<Item = &[f64]> {
        self.clusters.iter().map(|c| c.prototype.as_slice())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdleMode {
    /// A fixed number of idle generations after every window.
    Deterministic,
    /// Idle generations run until the next window arrives.
    WallClock,
}

/// Engine parameters. Defaults follow the published experimental protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub window_size: usize,
    pub gamma: f64,
    pub mu: f64,
    pub sigma: usize,
    pub prune_threshold: f64,
    pub interval_ms: u64,
    pub idle_generations_cap: usize,
    pub idle_mode: IdleMode,
    pub rng_seed: u64,
    pub l_max: usize,
    pub archive_capacity: Option<usize>,
    /// Tree depth at which aggregation folds whole subtrees into one node.
    pub fold_depth: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            window_size: 100,
            gamma: 0.7,
            mu: 0.2,
            sigma: 10,
            prune_threshold: 0.1,
            interval_ms: 1000,
            idle_generations_cap: 10,
            idle_mode: IdleMode::Deterministic,
            rng_seed: 0,
            l_max: 10,
            archive_capacity: Some(50),
            fold_depth: 2,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.window_size == 0 {
            return bad("window_size must be positive");
        }
        // gamma = 1 is accepted so that the undecayed streaming mean can be audited.
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return bad("mu must lie in (0, 1]");
        }
        if self.sigma == 0 {
            return bad("sigma must be positive");
        }
        if !(self.prune_threshold >= 0.0) {
            return bad("prune_threshold must be nonnegative");
        }
        if self.idle_generations_cap == 0 {
            return bad("idle_generations_cap must be positive");
        }
        if self.l_max < 2 {
            return bad("l_max must be at least 2");
        }
        if self.archive_capacity == Some(0) {
            return bad("archive capacity must be positive");
        }
        if self.fold_depth == 0 {
            return bad("fold_depth must be at least 1");
        }
        Ok(())
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest prototype; ties resolve to the lowest index.
/// Assumes matching dimensions and a nonempty slice.
pub(crate) fn nearest_index<'a, I>(prototypes: I, point: &[f64]) -> (usize, f64)
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut best = (0, f64::INFINITY);
    for (i, p) in prototypes.into_iter().enumerate() {
        let d = squared_euclidean(p, point);
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// Derives an independent RNG seed from a base seed and a path of indices
/// (splitmix64 finalizer applied per step).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut x = base;
    for &p in path {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}

/// Closest cluster of `solution` to `point` under Euclidean distance.
pub fn nearest_cluster(solution: &ClusteringSolution, point: &DataPoint) -> Result<usize> {
    if solution.clusters.is_empty() {
        return Err(Error::Precondition("solution has no clusters".into()));
    }
    let d = solution.dim();
    if point.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: point.dim(),
        });
    }
    Ok(nearest_index(solution.prototypes(), &point.coords).0)
}

/// Batch prototype update: `w <- (w n gamma + z m) / (n gamma + m)`, `n <- n gamma + m`.
pub fn merge_prototype(
    cluster: &ClusterSummary,
    batch_mean: &[f64],
    batch_count: f64,
    gamma: f64,
) -> Result<ClusterSummary> {
    if batch_mean.len() != cluster.dim() {
        return Err(Error::DimensionMismatch {
            expected: cluster.dim(),
            found: batch_mean.len(),
        });
    }
    if !(batch_count > 0.0) || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Precondition(
            "merge_prototype needs batch_count > 0 and 0 < gamma <= 1".into(),
        ));
    }
    let old = cluster.count * gamma;
    let total = old + batch_count;
    if !(total > 0.0) {
        return Err(Error::Precondition("merged count vanished".into()));
    }
    let prototype = cluster
        .prototype
        .iter()
        .zip(batch_mean)
        .map(|(w, z)| (w * old + z * batch_count) / total)
        .collect();
    Ok(ClusterSummary {
        prototype,
        count: total,
        ..cluster.clone()
    })
}

/// Fading with refresh: `weight <- gamma * weight + assigned`.
pub fn fade_weight(cluster: &ClusterSummary, gamma: f64, assigned: f64) -> ClusterSummary {
    ClusterSummary {
        weight: gamma * cluster.weight + assigned,
        ..cluster.clone()
    }
}

/// Drops clusters whose weight fell below `threshold`, always keeping the
/// heaviest one so that the solution stays nonempty.
pub fn prune_outdated(solution: &ClusteringSolution, threshold: f64) -> ClusteringSolution {
    let mut out = solution.clone();
    prune_in_place(&mut out.clusters, threshold);
    out
}

pub(crate) fn prune_in_place(clusters: &mut Vec<ClusterSummary>, threshold: f64) {
    if clusters.iter().all(|c| c.weight < threshold) {
        if let Some(heaviest) = heaviest_index(clusters) {
            let keep = clusters.swap_remove(heaviest);
            clusters.clear();
            clusters.push(keep);
        }
        return;
    }
    clusters.retain(|c| c.weight >= threshold);
}

fn heaviest_index(clusters: &[ClusterSummary]) -> Option<usize> {
    // first maximum wins on ties
    let mut best: Option<usize> = None;
    for (i, c) in clusters.iter().enumerate() {
        if best.is_none_or(|b| c.weight > clusters[b].weight) {
            best = Some(i);
        }
    }
    best
}
