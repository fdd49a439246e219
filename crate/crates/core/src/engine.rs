//! The streaming loop: seeding from the first window, per-window updates of
//! the tree and of every archived solution, idle-time evolution and final
//! selection.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anttree::{AntTree, MapEvent, NodeId, TreeSynopsis};
use crate::chromosome::serialize_chromosome;
use crate::error::{Error, Result};
use crate::evolution::{
    breed, evaluate_offspring, fitness_score, idle_generation, CancelToken,
    EvolutionParams, GenerationStats, IdleBudget,
};
use crate::metrics::{arand, nmi, select_best};
use crate::model::{
    derive_seed, fade_weight, merge_prototype, nearest_index, prune_in_place,
    ClusteringSolution, IdleMode, ObjectiveVector, SolutionId, StreamConfig, WindowBatch,
};
use crate::objectives::{
    assign, full_neighbourhood, hypervolume, knn_separateness, separateness, update_compactness,
    ParetoArchive,
};
use crate::seeders::{seed_population, SeederParams};

/// One line of the run report, emitted once per window in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_id: u64,
    pub archive_size: usize,
    /// Windowed Davies–Bouldin index of the selected solution; `None` when
    /// it is infinite.
    pub best_dbi: Option<f64>,
    pub best_k: usize,
    /// Lowest `compactness - separateness` in the archive.
    pub best_fitness: f64,
    pub nmi: Option<f64>,
    pub arand: Option<f64>,
    /// Archive hypervolume against `hv_reference`.
    pub hypervolume: f64,
    pub hv_reference: [f64; 2],
    /// Prototype vectors held by the synopsis: all archived clusters plus
    /// every tree node.
    pub stored_vectors: usize,
    pub tree_nodes: usize,
    /// Processing time of the window; absent in deterministic mode so that
    /// reports are reproducible byte for byte.
    pub elapsed_ms: Option<f64>,
}

/// The final answer of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalSelection {
    pub solution: ClusteringSolution,
    pub dbi: f64,
    /// `(point index, cluster)` for every point of the last window.
    pub assignments: Vec<(u64, usize)>,
    pub chromosome: Vec<f64>,
}

/// Engine state between windows. Only the most recent window is held.
#[derive(Debug)]
pub struct Engine {
    cfg: StreamConfig,
    tree: TreeSynopsis,
    tree_compactness: f64,
    archive: ParetoArchive,
    snapshot: WindowBatch,
    window_id: u64,
    dim: usize,
    next_id: u64,
    generations_in_window: u64,
    initial_mapping: Vec<(u64, NodeId)>,
    last_events: Vec<(u64, MapEvent)>,
    cancel: CancelToken,
}

impl Engine {
    /// Builds the tree and the seed population from the first window and
    /// reports on it.
    pub fn initialize(
        first: WindowBatch,
        cfg: StreamConfig,
        seeders: &SeederParams,
    ) -> Result<(Engine, WindowReport)> {
        cfg.validate()?;
        if first.is_empty() {
            return Err(Error::EmptyInput);
        }
        let started = Instant::now();
        let dim = first.dim()?;
        let (tree, initial_mapping) = AntTree::build(&first, cfg.l_max)?.aggregate(cfg.fold_depth);

        let mut next_id = 0u64;
        let mut fresh_id = || {
            next_id += 1;
            SolutionId(next_id - 1)
        };
        let mut population = seed_population(&first, seeders, derive_seed(cfg.rng_seed, &[0]))?;
        for s in &mut population {
            s.id = fresh_id();
        }
        let mut macro_solution = tree.macro_clusters(fresh_id())?;
        let tree_compactness = window_cost(&macro_solution, &first);
        macro_solution.objectives = ObjectiveVector::new(
            tree_compactness,
            separateness(&macro_solution, &full_neighbourhood(macro_solution.k()))?,
        );
        population.push(macro_solution);

        // one crossover and mutation pass over the whole seed population
        let mut ranked: Vec<&ClusteringSolution> = population.iter().collect();
        ranked.sort_by(|a, b| fitness_score(a).total_cmp(&fitness_score(b)).then(a.id.cmp(&b.id)));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, &[1]));
        let mut offspring = Vec::new();
        for (mut child, from) in breed(&ranked, cfg.mu, &mut rng)? {
            let from: Vec<&ClusteringSolution> = from.iter().map(|&j| ranked[j]).collect();
            evaluate_offspring(&mut child, &from, &first, cfg.gamma)?;
            child.id = fresh_id();
            offspring.push(child);
        }

        let mut archive = ParetoArchive::new(cfg.archive_capacity);
        for s in population.into_iter().chain(offspring) {
            if s.objectives.is_finite() {
                archive.insert(s);
            }
        }
        let engine = Engine {
            cfg,
            tree,
            tree_compactness,
            archive,
            snapshot: first,
            window_id: 0,
            dim,
            next_id,
            generations_in_window: 0,
            initial_mapping,
            last_events: Vec::new(),
            cancel: CancelToken::new(),
        };
        let report = engine.report(started)?;
        Ok((engine, report))
    }

    /// Consumes the next window: maps its points into the tree, moves every
    /// archived solution, fades and prunes, refreshes objectives, re-offers
    /// the tree's solution and re-screens the archive.
    pub fn process_window(&mut self, window: WindowBatch) -> Result<WindowReport> {
        let started = Instant::now();
        if window.is_empty() {
            return Err(Error::Precondition(format!("window {} is empty", window.window_id)));
        }
        let found = window.dim()?;
        if found != self.dim {
            return Err(Error::DimensionDrift {
                window_id: window.window_id,
                expected: self.dim,
                found,
            });
        }
        let gamma = self.cfg.gamma;
        let threshold = self.cfg.prune_threshold;

        // tree track: cost against the macro solution as it stood at window start
        let tree_term = window_cost(&self.tree.macro_clusters(SolutionId(0))?, &window);
        self.last_events.clear();
        for p in &window.points {
            let ev = self.tree.map_point(p, gamma)?;
            self.last_events.push((p.index, ev));
        }
        self.tree.end_window(gamma, threshold);

        // chromosome track
        for s in self.archive.solutions_mut().iter_mut() {
            advance_solution(s, &window, gamma, threshold)?;
        }

        let id = self.fresh_id();
        let mut macro_solution = self.tree.macro_clusters(id)?;
        let compactness = gamma * self.tree_compactness + tree_term;
        macro_solution.prior_compactness = self.tree_compactness;
        macro_solution.objectives = ObjectiveVector::new(
            compactness,
            separateness(&macro_solution, &full_neighbourhood(macro_solution.k()))?,
        );
        self.tree_compactness = compactness;

        self.archive.rescreen();
        if macro_solution.objectives.is_finite() {
            self.archive.insert(macro_solution);
        }
        self.snapshot = window;
        self.window_id = self.snapshot.window_id;
        self.generations_in_window = 0;
        self.report(started)
    }

    /// One idle generation on the current window.
    pub fn run_idle_generation(&mut self) -> Result<GenerationStats> {
        let params = EvolutionParams {
            sigma: self.cfg.sigma,
            mu: self.cfg.mu,
            gamma: self.cfg.gamma,
        };
        let seed = derive_seed(self.cfg.rng_seed, &[2, self.window_id, self.generations_in_window]);
        self.generations_in_window += 1;
        idle_generation(
            &mut self.archive,
            &self.snapshot,
            &params,
            seed,
            &mut self.next_id,
            &self.cancel,
        )
    }

    /// Runs generations while the budget allows and nobody cancelled.
    /// Returns the number of generations started.
    pub fn on_idle(&mut self, mut budget: IdleBudget) -> Result<usize> {
        let mut ran = 0;
        while budget.permits() && !self.cancel.is_cancelled() {
            let stats = self.run_idle_generation()?;
            budget.consume();
            ran += 1;
            if stats.cancelled {
                break;
            }
        }
        Ok(ran)
    }

    /// Best archived solution on the last window, its assignment of that
    /// window and its chromosome.
    pub fn finalize(&self) -> Result<FinalSelection> {
        let (best, dbi) = select_best(&self.archive, &self.snapshot)?;
        let assignment = assign(best, &self.snapshot);
        Ok(FinalSelection {
            solution: best.clone(),
            dbi,
            assignments: self
                .snapshot
                .points
                .iter()
                .map(|p| p.index)
                .zip(assignment)
                .collect(),
            chromosome: serialize_chromosome(best),
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn archive(&self) -> &ParetoArchive {
        &self.archive
    }

    pub fn tree(&self) -> &TreeSynopsis {
        &self.tree
    }

    pub fn window_id(&self) -> u64 {
        self.window_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The window idle generations evaluate against.
    pub fn snapshot(&self) -> &WindowBatch {
        &self.snapshot
    }

    /// Raw points the engine still owns: only the current window.
    pub fn retained_points(&self) -> usize {
        self.snapshot.len()
    }

    /// Prototype vectors held by the synopsis.
    pub fn stored_vectors(&self) -> usize {
        self.archive.solutions().iter().map(ClusteringSolution::k).sum::<usize>()
            + self.tree.node_count()
    }

    /// Where each first-window point ended up after aggregation.
    pub fn initial_tree_mapping(&self) -> &[(u64, NodeId)] {
        &self.initial_mapping
    }

    /// What the last processed window did to the tree, point by point.
    pub fn last_tree_events(&self) -> &[(u64, MapEvent)] {
        &self.last_events
    }

    /// Replaces the cancellation token, e.g. with one shared with a producer
    /// thread.
    pub fn with_cancel_token(mut self, token: CancelToken) -> Self {
        self.cancel = token;
        self
    }

    /// Token that interrupts idle work; cancelling it stops the current
    /// generation before its next offspring evaluation.
    pub fn cancel_token(&self) -> CancelToken {
        self.cancel.clone()
    }

    fn fresh_id(&mut self) -> SolutionId {
        self.next_id += 1;
        SolutionId(self.next_id - 1)
    }

    fn report(&self, started: Instant) -> Result<WindowReport> {
        let (best, dbi) = select_best(&self.archive, &self.snapshot)?;
        let (nmi_v, arand_v) = match self.snapshot.labels() {
            Some(truth) if truth.len() >= 2 => {
                let predicted = assign(best, &self.snapshot);
                (Some(nmi(&truth, &predicted)?), Some(arand(&truth, &predicted)?))
            }
            _ => (None, None),
        };
        let best_fitness = self
            .archive
            .solutions()
            .iter()
            .map(fitness_score)
            .fold(f64::INFINITY, f64::min);
        let reference = hv_reference(&self.archive);
        Ok(WindowReport {
            window_id: self.window_id,
            archive_size: self.archive.len(),
            best_dbi: dbi.is_finite().then_some(dbi),
            best_k: best.k(),
            best_fitness,
            nmi: nmi_v,
            arand: arand_v,
            hypervolume: hypervolume(&self.archive, &reference)?,
            hv_reference: [reference.compactness, reference.separateness],
            stored_vectors: self.stored_vectors(),
            tree_nodes: self.tree.node_count(),
            elapsed_ms: match self.cfg.idle_mode {
                IdleMode::Deterministic => None,
                IdleMode::WallClock => Some(started.elapsed().as_secs_f64() * 1e3),
            },
        })
    }
}

/// Reference point for reported hypervolumes: 10% beyond the worst archived
/// compactness, and zero separateness.
pub fn hv_reference(archive: &ParetoArchive) -> ObjectiveVector {
    let worst = archive
        .solutions()
        .iter()
        .map(|s| s.objectives.compactness)
        .fold(0.0, f64::max);
    let c = if worst > 0.0 { worst * 1.1 } else { worst + 1.0 };
    ObjectiveVector::new(c, 0.0)
}

/// Sum of distances from the window points to their nearest prototype.
fn window_cost(solution: &ClusteringSolution, window: &WindowBatch) -> f64 {
    window
        .points
        .iter()
        .map(|p| nearest_index(solution.prototypes(), &p.coords).1)
        .sum()
}

/// Moves one archived solution across a window: compactness is charged
/// against the prototypes as they stood at window start, then each cluster
/// absorbs the mean of its points, weights fade, outdated clusters go and
/// separateness is recomputed.
pub fn advance_solution(
    solution: &mut ClusteringSolution,
    window: &WindowBatch,
    gamma: f64,
    prune_threshold: f64,
) -> Result<()> {
    let assignment = assign(solution, window);
    let previous = solution.objectives.compactness;
    let compactness = update_compactness(solution, window, &assignment, gamma)?;

    let d = solution.dim();
    let k = solution.k();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in window.points.iter().zip(&assignment) {
        for (s, x) in sums[c].iter_mut().zip(&p.coords) {
            *s += x;
        }
        counts[c] += 1;
    }
    for ((cluster, sum), &m) in solution.clusters.iter_mut().zip(sums).zip(&counts) {
        if m > 0 {
            let mean: Vec<f64> = sum.iter().map(|s| s / m as f64).collect();
            *cluster = merge_prototype(cluster, &mean, m as f64, gamma)?;
        } else {
            cluster.count *= gamma;
        }
        *cluster = fade_weight(cluster, gamma, m as f64);
    }
    prune_in_place(&mut solution.clusters, prune_threshold);

    solution.prior_compactness = previous;
    solution.objectives = ObjectiveVector::new(compactness, knn_separateness(solution));
    Ok(())
}
