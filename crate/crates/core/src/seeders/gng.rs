use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finish, mean_of};
use crate::error::{Error, Result};
use crate::model::{nearest_index, squared_euclidean, ClusteringSolution, Origin, WindowBatch};

/// Growing neural gas hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GngParams {
    /// Step size for the winning unit.
    pub eps_b: f64,
    /// Step size for the winner's topological neighbours.
    pub eps_n: f64,
    pub max_age: u32,
    /// A unit is inserted every `lambda` signals.
    pub lambda: usize,
    pub max_nodes: usize,
    /// Error reduction of the two units that spawn a new one.
    pub alpha: f64,
    /// Global error decay per signal.
    pub decay: f64,
}

impl Default for GngParams {
    fn default() -> Self {
        GngParams {
            eps_b: 0.05,
            eps_n: 0.006,
            max_age: 50,
            lambda: 100,
            max_nodes: 32,
            alpha: 0.5,
            decay: 0.995,
        }
    }
}

impl GngParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.eps_b) || !unit(self.eps_n) || !unit(self.alpha) || !unit(self.decay) {
            return Err(Error::InvalidConfig(
                "gng step sizes, alpha and decay must lie in (0, 1]".into(),
            ));
        }
        if self.lambda == 0 || self.max_nodes < 2 || self.max_age == 0 {
            return Err(Error::InvalidConfig(
                "gng needs lambda >= 1, max_nodes >= 2, max_age >= 1".into(),
            ));
        }
        Ok(())
    }
}

struct Gas {
    units: Vec<Vec<f64>>,
    error: Vec<f64>,
    /// (low, high) unit index -> age
    edges: BTreeMap<(usize, usize), u32>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Gas {
    fn neighbours(&self, u: usize) -> Vec<usize> {
        self.edges
            .keys()
            .filter_map(|&(a, b)| {
                if a == u {
                    Some(b)
                } else if b == u {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    fn two_nearest(&self, x: &[f64]) -> (usize, usize) {
        let mut best = (usize::MAX, f64::INFINITY);
        let mut second = (usize::MAX, f64::INFINITY);
        for (i, u) in self.units.iter().enumerate() {
            let d = squared_euclidean(u, x);
            if d < best.1 {
                second = best;
                best = (i, d);
            } else if d < second.1 {
                second = (i, d);
            }
        }
        (best.0, second.0)
    }

    fn adapt(&mut self, x: &[f64], p: &GngParams) {
        let (s1, s2) = self.two_nearest(x);
        for e in self.edges.iter_mut().filter(|(k, _)| k.0 == s1 || k.1 == s1) {
            *e.1 += 1;
        }
        self.error[s1] += squared_euclidean(&self.units[s1], x);
        for (w, v) in self.units[s1].iter_mut().zip(x) {
            *w += p.eps_b * (v - *w);
        }
        for n in self.neighbours(s1) {
            for (w, v) in self.units[n].iter_mut().zip(x) {
                *w += p.eps_n * (v - *w);
            }
        }
        self.edges.insert(key(s1, s2), 0);
        self.edges.retain(|_, age| *age <= p.max_age);
        self.drop_isolated();
    }

    /// Removes units left without edges, renumbering the rest. At least two
    /// units always remain.
    fn drop_isolated(&mut self) {
        let mut linked = vec![false; self.units.len()];
        for &(a, b) in self.edges.keys() {
            linked[a] = true;
            linked[b] = true;
        }
        if linked.iter().all(|&l| l) || linked.iter().filter(|&&l| l).count() < 2 {
            return;
        }
        let mut remap = vec![usize::MAX; self.units.len()];
        let mut next = 0;
        for (i, &l) in linked.iter().enumerate() {
            if l {
                remap[i] = next;
                next += 1;
            }
        }
        let mut i = 0;
        self.units.retain(|_| {
            i += 1;
            linked[i - 1]
        });
        let mut i = 0;
        self.error.retain(|_| {
            i += 1;
            linked[i - 1]
        });
        self.edges = std::mem::take(&mut self.edges)
            .into_iter()
            .map(|((a, b), age)| ((remap[a], remap[b]), age))
            .collect();
    }

    fn insert(&mut self, p: &GngParams) {
        if self.units.len() >= p.max_nodes {
            return;
        }
        let q = argmax(self.error.iter().copied().enumerate());
        let f = argmax(self.neighbours(q).into_iter().map(|n| (n, self.error[n])));
        if f == usize::MAX {
            return;
        }
        let r = self.units.len();
        let w: Vec<f64> = self.units[q]
            .iter()
            .zip(&self.units[f])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        self.units.push(w);
        self.edges.remove(&key(q, f));
        self.edges.insert(key(q, r), 0);
        self.edges.insert(key(r, f), 0);
        self.error[q] *= p.alpha;
        self.error[f] *= p.alpha;
        self.error.push(self.error[q]);
    }

    /// Connected components over the surviving edges, as a component index
    /// per unit, numbered by lowest member unit.
    fn components(&self) -> Vec<usize> {
        let n = self.units.len();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = next;
            while let Some(u) = stack.pop() {
                for v in self.neighbours(u) {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

/// Index of the largest value, lowest index on ties; `usize::MAX` if empty.
fn argmax(values: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, v) in values {
        if v > best.1 || (v == best.1 && i < best.0) {
            best = (i, v);
        }
    }
    best.0
}

/// [`seed_gng_with`] under the default hyperparameters.
pub fn seed_gng(window: &WindowBatch, epochs: usize, seed: u64) -> Result<ClusteringSolution> {
    seed_gng_with(window, epochs, &GngParams::default(), seed)
}

/// Trains a growing neural gas for `epochs` shuffled passes over the window.
/// Units joined by surviving edges form one cluster whose prototype is the
/// mean of the window points nearest to its units; components that attract
/// no point are dropped.
pub fn seed_gng_with(
    window: &WindowBatch,
    epochs: usize,
    params: &GngParams,
    seed: u64,
) -> Result<ClusteringSolution> {
    if epochs == 0 {
        return Err(Error::Precondition("gng needs at least one epoch".into()));
    }
    if window.len() < 2 {
        return Err(Error::Precondition("gng needs at least two points".into()));
    }
    params.validate()?;
    let d = window.dim()?;
    let pts: Vec<&[f64]> = window.points.iter().map(|p| p.coords.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let a = rng.random_range(0..pts.len());
    let mut b = rng.random_range(0..pts.len() - 1);
    if b >= a {
        b += 1;
    }
    let mut gas = Gas {
        units: vec![pts[a].to_vec(), pts[b].to_vec()],
        error: vec![0.0; 2],
        edges: BTreeMap::new(),
    };

    let mut order: Vec<usize> = (0..pts.len()).collect();
    let mut signals = 0usize;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            gas.adapt(pts[i], params);
            signals += 1;
            if signals % params.lambda == 0 {
                gas.insert(params);
            }
            for e in &mut gas.error {
                *e *= params.decay;
            }
        }
    }

    let comp = gas.components();
    let n_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); n_comp];
    for p in &pts {
        let u = nearest_index(gas.units.iter().map(Vec::as_slice), p).0;
        members[comp[u]].push(p);
    }
    let members: Vec<Vec<&[f64]>> = members.into_iter().filter(|m| !m.is_empty()).collect();
    let counts = members.iter().map(Vec::len).collect();
    let centres = members.into_iter().map(|m| mean_of(m, d)).collect();
    finish(window, centres, counts, Origin::Gng)
}
