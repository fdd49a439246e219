use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finish, mean_of};
use crate::error::{Error, Result};
use crate::model::{nearest_index, squared_euclidean, ClusteringSolution, Origin, WindowBatch};

const MAX_ITERATIONS: usize = 100;

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing (at most 100 rounds). A cluster that loses all its points is
/// re-seeded at the point farthest from its current centre.
pub fn seed_kmeans(window: &WindowBatch, k: usize, seed: u64) -> Result<ClusteringSolution> {
    let n = window.len();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!(
            "k-means needs 1 <= k <= window size, got k={k} for {n} points"
        )));
    }
    let d = window.dim()?;
    let points: Vec<&[f64]> = window.points.iter().map(|p| p.coords.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres = plus_plus(&points, k, &mut rng);

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (slot, p) in assignment.iter_mut().zip(&points) {
            let c = nearest_index(centres.iter().map(Vec::as_slice), p).0;
            if *slot != c {
                *slot = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        reseed_empty(&points, &mut centres, &mut assignment);
        for (c, centre) in centres.iter_mut().enumerate() {
            let members = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| *p);
            *centre = mean_of(members, d);
        }
    }
    let mut counts = vec![0usize; k];
    for &a in &assignment {
        counts[a] += 1;
    }
    finish(window, centres, counts, Origin::Kmeans)
}

fn plus_plus(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centres = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_euclidean(p, &centres[0]))
        .collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            // every point coincides with a centre already
            rng.random_range(0..points.len())
        };
        centres.push(points[pick].to_vec());
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(squared_euclidean(p, &centres[centres.len() - 1]));
        }
    }
    centres
}

fn reseed_empty(points: &[&[f64]], centres: &mut [Vec<f64>], assignment: &mut [usize]) {
    let k = centres.len();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        // farthest point from its own centre, among clusters that can spare one
        let far = (0..points.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| {
                let da = squared_euclidean(points[a], &centres[assignment[a]]);
                let db = squared_euclidean(points[b], &centres[assignment[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            });
        let Some(far) = far else {
            return;
        };
        centres[empty] = points[far].to_vec();
        assignment[far] = empty;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DataPoint;

    fn window(pts: &[[f64; 2]]) -> WindowBatch {
        WindowBatch::new(
            pts.iter().enumerate().map(|(i, p)| DataPoint::new(p.to_vec(), None, i as u64)).collect(),
            0,
        )
    }

    fn sorted_protos(s: &ClusteringSolution) -> Vec<Vec<f64>> {
        let mut v: Vec<Vec<f64>> = s.prototypes().map(<[f64]>::to_vec).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn duplicated_triples() {
        let w = window(&[
            [0.0, 0.0], [0.0, 0.0], [0.0, 0.0],
            [50.0, 0.0], [50.0, 0.0], [50.0, 0.0],
            [0.0, 50.0], [0.0, 50.0], [0.0, 50.0],
        ]);
        for seed in 0..20 {
            let s = seed_kmeans(&w, 3, seed).unwrap();
            assert_eq!(sorted_protos(&s), vec![vec![0.0, 0.0], vec![0.0, 50.0], vec![50.0, 0.0]]);
            assert_eq!(s.objectives.compactness, 0.0);
            assert!(s.clusters.iter().all(|c| c.count == 3.0));
        }
    }

    #[test]
    fn single_centre_is_the_mean() {
        let w = window(&[[0.0, 0.0], [2.0, 0.0], [4.0, 6.0]]);
        let s = seed_kmeans(&w, 1, 7).unwrap();
        assert_eq!(s.clusters[0].prototype, vec![2.0, 2.0]);
        assert_eq!(s.objectives.separateness, 0.0);
    }

    #[test]
    fn rejects_k_larger_than_window() {
        let w = window(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(seed_kmeans(&w, 3, 0).is_err());
        assert!(seed_kmeans(&w, 0, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let pts: Vec<[f64; 2]> = (0..60).map(|i| [((i * 37) % 17) as f64, ((i * 11) % 23) as f64]).collect();
        let w = window(&pts);
        let a = seed_kmeans(&w, 5, 42).unwrap();
        let b = seed_kmeans(&w, 5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_identical_points_keep_k_clusters() {
        let w = window(&[[1.0, 1.0]; 5]);
        let s = seed_kmeans(&w, 3, 0).unwrap();
        assert_eq!(s.k(), 3);
        assert!(s.prototypes().all(|p| p == [1.0, 1.0]));
    }
}
