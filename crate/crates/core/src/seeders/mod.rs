//! Base clusterers that build the initial population from the first window.

mod dbscan;
mod gng;
mod kmeans;

pub use dbscan::{seed_dbscan, DbscanSeed};
pub use gng::{seed_gng, seed_gng_with, GngParams};
pub use kmeans::seed_kmeans;

use crate::error::{Error, Result};
use crate::model::{derive_seed, ClusterSummary, ClusteringSolution, Origin, SolutionId, WindowBatch};
use crate::objectives::evaluate_first_window;

#[derive(Clone, Debug, PartialEq)]
pub struct SeederParams {
    pub kmeans_k_min: usize,
    pub kmeans_k_max: usize,
    pub dbscan_min_pts: usize,
    pub dbscan_radius: f64,
    pub gng_epochs: usize,
    pub gng: GngParams,
}

impl Default for SeederParams {
    fn default() -> Self {
        SeederParams {
            kmeans_k_min: 2,
            kmeans_k_max: 15,
            dbscan_min_pts: 20,
            dbscan_radius: 10.0,
            gng_epochs: 30,
            gng: GngParams::default(),
        }
    }
}

impl SeederParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.kmeans_k_min < 2 || self.kmeans_k_min > self.kmeans_k_max {
            return bad("kmeans K range must satisfy 2 <= k_min <= k_max");
        }
        if self.dbscan_min_pts == 0 {
            return bad("dbscan min_pts must be at least 1");
        }
        if !(self.dbscan_radius > 0.0) || !self.dbscan_radius.is_finite() {
            return bad("dbscan radius must be positive");
        }
        if self.gng_epochs == 0 {
            return bad("gng epochs must be at least 1");
        }
        self.gng.validate()
    }
}

/// Runs every seeder on `window`: k-means for each feasible K in the
/// configured range, then DBSCAN, then GNG. Solutions carry objectives but
/// their ids are left for the caller to assign.
pub fn seed_population(
    window: &WindowBatch,
    params: &SeederParams,
    seed: u64,
) -> Result<Vec<ClusteringSolution>> {
    params.validate()?;
    let n = window.len();
    let mut out = Vec::new();
    for k in params.kmeans_k_min..=params.kmeans_k_max.min(n) {
        out.push(seed_kmeans(window, k, derive_seed(seed, &[1, k as u64]))?);
    }
    out.push(seed_dbscan(window, params.dbscan_min_pts, params.dbscan_radius)?.solution);
    if n >= 2 {
        out.push(seed_gng_with(
            window,
            params.gng_epochs,
            &params.gng,
            derive_seed(seed, &[2]),
        )?);
    }
    Ok(out)
}

/// Wraps per-cluster members into an evaluated solution. Prototypes are the
/// given centres; counts are the member counts.
pub(crate) fn finish(
    window: &WindowBatch,
    centres: Vec<Vec<f64>>,
    counts: Vec<usize>,
    origin: Origin,
) -> Result<ClusteringSolution> {
    let clusters = centres
        .into_iter()
        .zip(counts)
        .map(|(c, n)| ClusterSummary::new(c, n as f64))
        .collect();
    let mut s = ClusteringSolution::new(clusters, origin, SolutionId(0));
    evaluate_first_window(&mut s, window)?;
    Ok(s)
}

pub(crate) fn mean_of<'a>(points: impl IntoIterator<Item = &'a [f64]>, d: usize) -> Vec<f64> {
    let mut sum = vec![0.0; d];
    let mut n = 0usize;
    for p in points {
        for (s, v) in sum.iter_mut().zip(p) {
            *s += v;
        }
        n += 1;
    }
    if n > 0 {
        for s in &mut sum {
            *s /= n as f64;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DataPoint;

    #[test]
    fn sweep_is_truncated_to_window_size() {
        let w = WindowBatch::new(
            (0..6).map(|i| DataPoint::new(vec![i as f64 * 3.0, 0.0], None, i)).collect(),
            0,
        );
        let pop = seed_population(&w, &SeederParams::default(), 0).unwrap();
        let kmeans = pop.iter().filter(|s| s.origin == Origin::Kmeans).count();
        assert_eq!(kmeans, 5);
        assert_eq!(pop.len(), 7);
    }

    #[test]
    fn full_sweep_gives_fourteen_kmeans_solutions() {
        let w = WindowBatch::new(
            (0..100)
                .map(|i| DataPoint::new(vec![(i % 10) as f64, (i / 10) as f64], None, i))
                .collect(),
            0,
        );
        let pop = seed_population(&w, &SeederParams::default(), 0).unwrap();
        let ks: Vec<usize> = pop.iter().filter(|s| s.origin == Origin::Kmeans).map(|s| s.k()).collect();
        assert_eq!(ks, (2..=15).collect::<Vec<_>>());
        for s in &pop {
            assert!(s.k() >= 1);
            assert_eq!(s.dim(), 2);
            assert!(s.objectives.is_finite());
        }
    }

    #[test]
    fn params_validation() {
        assert!(SeederParams::default().validate().is_ok());
        let mut p = SeederParams::default();
        p.kmeans_k_min = 1;
        assert!(p.validate().is_err());
        let mut p = SeederParams::default();
        p.gng_epochs = 0;
        assert!(p.validate().is_err());
        let mut p = SeederParams::default();
        p.dbscan_radius = 0.0;
        assert!(p.validate().is_err());
    }
}
