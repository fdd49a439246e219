//! Idle-time genetic improvement of the archive: fitness-ranked parent
//! selection, single-point crossover over variable-K chromosomes and
//! random-resetting mutation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    nearest_index, ClusterSummary, ClusteringSolution, ObjectiveVector, Origin, SolutionId, WindowBatch,
};
use crate::objectives::{assign, knn_separateness, update_compactness, ParetoArchive};

/// `compactness - separateness`; lower is better.
pub fn fitness_score(solution: &ClusteringSolution) -> f64 {
    solution.objectives.compactness - solution.objectives.separateness
}

/// The `min(sigma, |archive|)` members with the lowest fitness, best first;
/// ties go to the lower solution id.
pub fn select_parents(archive: &ParetoArchive, sigma: usize) -> Vec<&ClusteringSolution> {
    let mut ranked: Vec<&ClusteringSolution> = archive.solutions().iter().collect();
    ranked.sort_by(|a, b| {
        fitness_score(a)
            .total_cmp(&fitness_score(b))
            .then(a.id.cmp(&b.id))
    });
    ranked.truncate(sigma);
    ranked
}

/// Single-point crossover at cut `i` (1-based, `1 < i < min(K1, K2)`).
///
/// With `A` the parent holding fewer clusters (`p1` on ties) and `B` the
/// other: `child1 = A[1..=i] ++ B[i+1..]` and `child2 = A[i+1..] ++ B[1..=i]`.
/// Children keep the parents' cluster summaries; their objectives are stale
/// until evaluated.
pub fn crossover(
    p1: &ClusteringSolution,
    p2: &ClusteringSolution,
    i: usize,
) -> Result<(ClusteringSolution, ClusteringSolution)> {
    let (a, b) = if p2.k() < p1.k() { (p2, p1) } else { (p1, p2) };
    let min_k = a.k();
    if !(1 < i && i < min_k) {
        return Err(Error::Precondition(format!(
            "crossover point {i} outside 1 < i < {min_k}"
        )));
    }
    if p1.dim() != p2.dim() {
        return Err(Error::DimensionMismatch {
            expected: p1.dim(),
            found: p2.dim(),
        });
    }
    let child = |parts: [&[ClusterSummary]; 2]| {
        ClusteringSolution::new(parts.concat(), Origin::Crossover, SolutionId(0))
    };
    Ok((
        child([&a.clusters[..i], &b.clusters[i..]]),
        child([&a.clusters[i..], &b.clusters[..i]]),
    ))
}

/// Number of coordinates mutated per prototype: `max(1, round(mu * d))`,
/// capped at `d`.
pub fn mutation_positions(mu: f64, d: usize) -> usize {
    ((mu * d as f64).round() as usize).clamp(1, d.max(1))
}

/// `v + rho * v` or `v - rho * v`.
pub fn perturb(v: f64, rho: f64, positive: bool) -> f64 {
    if positive {
        v + rho * v
    } else {
        v - rho * v
    }
}

/// Random-resetting mutation: in every prototype, exactly
/// [`mutation_positions`] coordinates (drawn without replacement) are
/// perturbed by a factor `rho` uniform in `(0, 1)` with a random sign.
/// Counts and weights are left alone.
pub fn mutate<R: Rng>(solution: &ClusteringSolution, mu: f64, rng: &mut R) -> Result<ClusteringSolution> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Precondition(format!("mutation rate {mu} outside (0, 1]")));
    }
    let mut out = solution.clone();
    out.origin = Origin::Mutation;
    for c in &mut out.clusters {
        let d = c.prototype.len();
        if d == 0 {
            continue;
        }
        for pos in index::sample(rng, d, mutation_positions(mu, d)) {
            let rho = loop {
                let r: f64 = rng.random();
                if r > 0.0 {
                    break r;
                }
            };
            c.prototype[pos] = perturb(c.prototype[pos], rho, rng.random());
        }
    }
    Ok(out)
}

/// Symmetric mean nearest-prototype distance between two solutions.
pub fn prototype_set_distance(a: &ClusteringSolution, b: &ClusteringSolution) -> f64 {
    let one_way = |x: &ClusteringSolution, y: &ClusteringSolution| {
        x.prototypes()
            .map(|p| nearest_index(y.prototypes(), p).1)
            .sum::<f64>()
            / x.k().max(1) as f64
    };
    0.5 * (one_way(a, b) + one_way(b, a))
}

/// Evaluates an offspring on the window snapshot. Its compactness history is
/// the prior compactness of whichever parent lies nearer in prototype space
/// (the first on ties), decayed by `gamma`.
pub fn evaluate_offspring(
    child: &mut ClusteringSolution,
    parents: &[&ClusteringSolution],
    window: &WindowBatch,
    gamma: f64,
) -> Result<()> {
    let mut nearest: Option<(&ClusteringSolution, f64)> = None;
    for &p in parents {
        let d = prototype_set_distance(child, p);
        if nearest.is_none_or(|(_, best)| d < best) {
            nearest = Some((p, d));
        }
    }
    let prior = nearest.map_or(0.0, |(p, _)| p.prior_compactness);
    for c in &mut child.clusters {
        c.compactness_acc = 0.0;
    }
    child.objectives = ObjectiveVector::new(prior, 0.0);
    let assignment = assign(child, window);
    let compactness = update_compactness(child, window, &assignment, gamma)?;
    child.prior_compactness = prior;
    child.objectives = ObjectiveVector::new(compactness, knn_separateness(child));
    Ok(())
}

/// Cooperative cancellation shared between the ingestion side and the idle
/// worker. It counts windows announced but not yet taken up: idle work
/// stops while the count is nonzero.
#[derive(Clone, Debug, Default)]
pub struct CancelToken(Arc<AtomicUsize>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    /// Announces a pending window.
    pub fn cancel(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }

    /// Marks one pending window as taken up.
    pub fn acknowledge(&self) {
        let _ = self
            .0
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1));
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst) > 0
    }
}

/// How much idle work is allowed before the next window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdleBudget {
    pub generations_remaining: usize,
    pub wall_deadline: Option<Instant>,
}

impl IdleBudget {
    pub fn generations(n: usize) -> Self {
        IdleBudget {
            generations_remaining: n,
            wall_deadline: None,
        }
    }

    pub fn permits(&self) -> bool {
        self.generations_remaining > 0 && self.wall_deadline.is_none_or(|d| Instant::now() < d)
    }

    pub fn consume(&mut self) {
        self.generations_remaining = self.generations_remaining.saturating_sub(1);
    }
}

/// What one generation did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenerationStats {
    pub candidates: usize,
    pub evaluated: usize,
    pub inserted: usize,
    pub cancelled: bool,
}

/// Settings a generation needs from the engine configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolutionParams {
    pub sigma: usize,
    pub mu: f64,
    pub gamma: f64,
}

/// Builds the offspring of one generation without evaluating them, each
/// paired with the indices (into the returned parents) it descends from.
pub fn breed<R: Rng>(
    parents: &[&ClusteringSolution],
    mu: f64,
    rng: &mut R,
) -> Result<Vec<(ClusteringSolution, Vec<usize>)>> {
    let mut offspring = Vec::new();
    for (pair, chunk) in parents.chunks_exact(2).enumerate() {
        let min_k = chunk[0].k().min(chunk[1].k());
        if min_k < 3 {
            continue;
        }
        let i = rng.random_range(2..min_k);
        let (c1, c2) = crossover(chunk[0], chunk[1], i)?;
        offspring.push((c1, vec![2 * pair, 2 * pair + 1]));
        offspring.push((c2, vec![2 * pair, 2 * pair + 1]));
    }
    for (j, p) in parents.iter().enumerate() {
        offspring.push((mutate(p, mu, rng)?, vec![j]));
    }
    Ok(offspring)
}

/// One idle generation: select parents, breed, evaluate every offspring on
/// `window` and offer it to the archive. Offspring ids are drawn from
/// `next_id`. The token is checked before each evaluation; a cancelled
/// generation keeps what it already inserted.
pub fn idle_generation(
    archive: &mut ParetoArchive,
    window: &WindowBatch,
    params: &EvolutionParams,
    seed: u64,
    next_id: &mut u64,
    cancel: &CancelToken,
) -> Result<GenerationStats> {
    if archive.is_empty() {
        return Err(Error::Precondition("idle generation on an empty archive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parents: Vec<ClusteringSolution> = select_parents(archive, params.sigma)
        .into_iter()
        .cloned()
        .collect();
    let refs: Vec<&ClusteringSolution> = parents.iter().collect();
    let offspring = breed(&refs, params.mu, &mut rng)?;
    let mut stats = GenerationStats {
        candidates: offspring.len(),
        ..GenerationStats::default()
    };
    for (mut child, from) in offspring {
        if cancel.is_cancelled() {
            stats.cancelled = true;
            break;
        }
        let from: Vec<&ClusteringSolution> = from.iter().map(|&j| refs[j]).collect();
        evaluate_offspring(&mut child, &from, window, params.gamma)?;
        stats.evaluated += 1;
        if !child.objectives.is_finite() {
            continue;
        }
        child.id = SolutionId(*next_id);
        *next_id += 1;
        if archive.insert(child).inserted() {
            stats.inserted += 1;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{euclidean, DataPoint};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn window_cost(s: &ClusteringSolution, w: &WindowBatch) -> f64 {
        w.points
            .iter()
            .map(|p| s.prototypes().map(|q| euclidean(q, &p.coords)).fold(f64::INFINITY, f64::min))
            .sum()
    }

    fn sol(protos: &[Vec<f64>], id: u64) -> ClusteringSolution {
        ClusteringSolution::new(
            protos.iter().map(|p| ClusterSummary::new(p.clone(), 1.0)).collect(),
            Origin::Kmeans,
            SolutionId(id),
        )
    }

    /// Solution whose cluster `j` has prototype `[tag + j]`, so children can
    /// be traced back to their parents.
    fn tagged(k: usize, tag: f64) -> ClusteringSolution {
        sol(&(0..k).map(|j| vec![tag + j as f64]).collect::<Vec<_>>(), 0)
    }

    fn with_objectives(mut s: ClusteringSolution, c: f64, sep: f64) -> ClusteringSolution {
        s.objectives = ObjectiveVector::new(c, sep);
        s
    }

    #[test]
    fn fitness_examples() {
        assert_eq!(fitness_score(&with_objectives(tagged(1, 0.0), 3.0, 5.0)), -2.0);
        assert_eq!(fitness_score(&with_objectives(tagged(1, 0.0), 0.0, 0.0)), 0.0);
        assert!(
            fitness_score(&with_objectives(tagged(1, 0.0), 3.0, 5.0))
                < fitness_score(&with_objectives(tagged(1, 0.0), 4.0, 1.0))
        );
    }

    fn archive_of(objs: &[(f64, f64, u64)]) -> ParetoArchive {
        let mut a = ParetoArchive::new(None);
        for &(c, s, id) in objs {
            let mut x = with_objectives(tagged(2, id as f64 * 10.0), c, s);
            x.id = SolutionId(id);
            assert!(a.insert(x).inserted());
        }
        a
    }

    #[test]
    fn parent_selection() {
        let a = archive_of(&[(1.0, 1.0, 7), (2.0, 3.0, 3), (5.0, 9.0, 1)]);
        let ids = |v: Vec<&ClusteringSolution>| v.iter().map(|s| s.id.0).collect::<Vec<_>>();
        assert_eq!(ids(select_parents(&a, 10)), vec![1, 3, 7]);
        assert_eq!(ids(select_parents(&a, 1)), vec![1]);
        // equal fitness, lowest id first
        let tie = archive_of(&[(1.0, 1.0, 9), (2.0, 2.0, 4)]);
        assert_eq!(ids(select_parents(&tie, 2)), vec![4, 9]);
    }

    #[test]
    fn crossover_example() {
        let a = tagged(3, 0.0);
        let b = tagged(4, 100.0);
        let (c1, c2) = crossover(&a, &b, 2).unwrap();
        let flat = |s: &ClusteringSolution| s.prototypes().map(|p| p[0]).collect::<Vec<_>>();
        assert_eq!(flat(&c1), vec![0.0, 1.0, 102.0, 103.0]);
        assert_eq!(flat(&c2), vec![2.0, 100.0, 101.0]);
        // argument order does not change which parent plays A
        let (d1, d2) = crossover(&b, &a, 2).unwrap();
        assert_eq!(flat(&d1), flat(&c1));
        assert_eq!(flat(&d2), flat(&c2));
    }

    #[test]
    fn crossover_identical_parents_permute() {
        let a = tagged(3, 0.0);
        let (c1, c2) = crossover(&a, &a, 2).unwrap();
        let sorted = |s: &ClusteringSolution| {
            let mut v: Vec<f64> = s.prototypes().map(|p| p[0]).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        assert_eq!(sorted(&c1), vec![0.0, 1.0, 2.0]);
        assert_eq!(sorted(&c2), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn crossover_rejects_invalid_points() {
        let a = tagged(2, 0.0);
        let b = tagged(5, 10.0);
        assert!(crossover(&a, &b, 1).is_err());
        assert!(crossover(&tagged(4, 0.0), &b, 4).is_err());
        assert!(crossover(&tagged(4, 0.0), &b, 1).is_err());
    }

    #[test]
    fn crossover_exhaustive_counts() {
        for ka in 1..=15 {
            for kb in 1..=15 {
                let a = tagged(ka, 0.0);
                let b = tagged(kb, 1000.0);
                let (small, large) = if kb < ka { (kb, ka) } else { (ka, kb) };
                for i in 0..=16 {
                    let r = crossover(&a, &b, i);
                    if !(1 < i && i < small) {
                        assert!(r.is_err());
                        continue;
                    }
                    let (c1, c2) = r.unwrap();
                    assert_eq!(c1.k(), large);
                    assert_eq!(c2.k(), small);
                }
            }
        }
    }

    #[test]
    fn perturbation_examples() {
        assert_relative_eq!(perturb(2.0, 0.1, true), 2.2);
        assert_relative_eq!(perturb(2.0, 0.1, false), 1.8);
        assert_eq!(perturb(0.0, 0.7, true), 0.0);
        assert_eq!(mutation_positions(0.5, 4), 2);
        assert_eq!(mutation_positions(0.2, 2), 1);
        assert_eq!(mutation_positions(0.01, 10), 1);
        assert_eq!(mutation_positions(1.0, 32), 32);
    }

    #[test]
    fn mutation_changes_exact_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &mu in &[0.2, 0.5, 1.0] {
            for &d in &[2usize, 10, 32] {
                let protos: Vec<Vec<f64>> = (0..5)
                    .map(|k| (0..d).map(|j| 1.0 + (k * d + j) as f64).collect())
                    .collect();
                let s = sol(&protos, 0);
                let m = mutate(&s, mu, &mut rng).unwrap();
                for (a, b) in s.clusters.iter().zip(&m.clusters) {
                    let changed = a.prototype.iter().zip(&b.prototype).filter(|(x, y)| x.to_bits() != y.to_bits()).count();
                    assert_eq!(changed, mutation_positions(mu, d), "mu={mu} d={d}");
                    assert_eq!(a.count, b.count);
                    assert_eq!(a.weight, b.weight);
                }
            }
        }
        assert!(mutate(&tagged(2, 1.0), 0.0, &mut rng).is_err());
    }

    fn grid_window() -> WindowBatch {
        let pts = (0..40)
            .map(|i| {
                let c = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)][i % 4];
                let j = (i / 4) as f64 * 0.1;
                DataPoint::new(vec![c.0 + j, c.1 - j], None, i as u64)
            })
            .collect();
        WindowBatch::new(pts, 0)
    }

    #[test]
    fn offspring_inherit_nearer_parent_history() {
        let w = grid_window();
        let mut p1 = sol(&[vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]], 1);
        p1.prior_compactness = 100.0;
        let mut p2 = sol(&[vec![50.0, 50.0], vec![60.0, 50.0], vec![50.0, 60.0]], 2);
        p2.prior_compactness = 1.0;
        let mut child = p1.clone();
        evaluate_offspring(&mut child, &[&p1, &p2], &w, 0.5).unwrap();
        assert_relative_eq!(child.objectives.compactness, 50.0 + window_cost(&p1, &w), epsilon = 1e-9);
        assert_eq!(child.prior_compactness, 100.0);
        assert_relative_eq!(child.objectives.separateness, 10.0);
    }

    fn seeded_archive() -> ParetoArchive {
        let w = grid_window();
        let mut a = ParetoArchive::new(Some(50));
        let candidates = [
            vec![vec![0.0, 0.0], vec![10.0, 10.0]],
            vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![5.0, 10.0]],
            vec![vec![1.0, 1.0], vec![9.0, 1.0], vec![1.0, 9.0], vec![9.0, 9.0]],
            vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0], vec![10.0, 10.0], vec![5.0, 5.0]],
        ];
        for (id, protos) in candidates.iter().enumerate() {
            let mut s = sol(protos, id as u64);
            crate::objectives::evaluate_first_window(&mut s, &w).unwrap();
            a.insert(s);
        }
        a
    }

    fn params() -> EvolutionParams {
        EvolutionParams { sigma: 10, mu: 0.2, gamma: 0.7 }
    }

    #[test]
    fn single_member_archive_still_breeds() {
        let w = grid_window();
        let mut a = ParetoArchive::new(None);
        let mut s = sol(&[vec![5.0, 5.0]], 0);
        crate::objectives::evaluate_first_window(&mut s, &w).unwrap();
        a.insert(s);
        let mut next = 1;
        let stats = idle_generation(&mut a, &w, &params(), 3, &mut next, &CancelToken::new()).unwrap();
        assert!(stats.candidates >= 1);
        assert_eq!(stats.evaluated, stats.candidates);
    }

    #[test]
    fn generation_is_deterministic() {
        let w = grid_window();
        let run = || {
            let mut a = seeded_archive();
            let mut next = 100;
            for g in 0..3 {
                idle_generation(&mut a, &w, &params(), g, &mut next, &CancelToken::new()).unwrap();
            }
            a.solutions()
                .iter()
                .map(|s| crate::chromosome::format_record(&crate::chromosome::serialize_chromosome(s)))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn hypervolume_never_drops_over_generations() {
        let w = grid_window();
        let mut a = seeded_archive();
        let worst = a.solutions().iter().map(|s| s.objectives.compactness).fold(0.0, f64::max);
        let reference = ObjectiveVector::new(worst * 10.0, 0.0);
        let mut hv = crate::objectives::hypervolume(&a, &reference).unwrap();
        let mut next = 100;
        for g in 0..10 {
            idle_generation(&mut a, &w, &params(), g, &mut next, &CancelToken::new()).unwrap();
            let now = crate::objectives::hypervolume(&a, &reference).unwrap();
            assert!(now >= hv - 1e-12, "generation {g}: {now} < {hv}");
            assert!(a.is_mutually_non_dominated());
            hv = now;
        }
    }

    #[test]
    fn cancelled_generation_stops_before_evaluating() {
        let w = grid_window();
        let mut a = seeded_archive();
        let before = a.clone();
        let token = CancelToken::new();
        token.cancel();
        let mut next = 100;
        let stats = idle_generation(&mut a, &w, &params(), 0, &mut next, &token).unwrap();
        assert!(stats.cancelled);
        assert_eq!(stats.evaluated, 0);
        assert_eq!(a.solutions(), before.solutions());
    }

    #[test]
    fn token_counts_pending_windows() {
        let t = CancelToken::new();
        let other = t.clone();
        assert!(!t.is_cancelled());
        other.cancel();
        other.cancel();
        t.acknowledge();
        assert!(t.is_cancelled());
        t.acknowledge();
        t.acknowledge();
        assert!(!t.is_cancelled());
    }

    #[test]
    fn budget_accounting() {
        let mut b = IdleBudget::generations(2);
        assert!(b.permits());
        b.consume();
        b.consume();
        assert!(!b.permits());
        let past = IdleBudget {
            generations_remaining: 5,
            wall_deadline: Some(Instant::now()),
        };
        assert!(!past.permits());
    }

    proptest! {
        #[test]
        fn mutation_leaves_other_coordinates_bit_identical(
            protos in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 7), 1..6),
            mu in 0.05f64..=1.0,
            seed in any::<u64>(),
        ) {
            let s = sol(&protos, 0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = mutate(&s, mu, &mut rng).unwrap();
            for (a, b) in s.clusters.iter().zip(&m.clusters) {
                let changed = a.prototype.iter().zip(&b.prototype).filter(|(x, y)| x.to_bits() != y.to_bits()).count();
                let nonzero_picked_max = mutation_positions(mu, 7);
                prop_assert!(changed <= nonzero_picked_max);
                for (x, y) in a.prototype.iter().zip(&b.prototype) {
                    if x.to_bits() != y.to_bits() {
                        prop_assert!((y - x).abs() < x.abs() + 1e-12);
                    }
                }
            }
        }
    }
}
