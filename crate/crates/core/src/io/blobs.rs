use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{derive_seed, euclidean, DataPoint};

/// Gaussian blob stream description.
#[derive(Clone, Debug, PartialEq)]
pub struct BlobSpec {
    pub k: usize,
    pub per_blob: usize,
    /// Minimum distance between any two centres.
    pub sep: f64,
    pub stddev: f64,
    pub dim: usize,
    /// Offset added to every centre once per window.
    pub drift: Option<Vec<f64>>,
    /// Window length the drift is counted in.
    pub window_size: usize,
    pub seed: u64,
}

impl BlobSpec {
    pub fn new(k: usize, per_blob: usize, sep: f64, stddev: f64, seed: u64) -> Self {
        BlobSpec {
            k,
            per_blob,
            sep,
            stddev,
            dim: 2,
            drift: None,
            window_size: 100,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.k == 0 || self.per_blob == 0 || self.dim == 0 || self.window_size == 0 {
            return bad("blobs need k, per_blob, dim and window_size >= 1");
        }
        if !(self.sep > 0.0 && self.sep.is_finite()) || !(self.stddev > 0.0 && self.stddev.is_finite()) {
            return bad("blob sep and stddev must be positive");
        }
        if let Some(d) = &self.drift {
            if d.len() != self.dim || d.iter().any(|x| !x.is_finite()) {
                return bad("drift must be a finite vector of the blob dimension");
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.k * self.per_blob
    }
}

/// Parses `K,PER_BLOB,SEP,STDDEV`; dimension 2, no drift, seed 0.
impl FromStr for BlobSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::InvalidConfig(format!("blob spec {s:?} is not K,PER_BLOB,SEP,STDDEV"));
        if parts.len() != 4 {
            return Err(bad());
        }
        let spec = BlobSpec::new(
            parts[0].parse().map_err(|_| bad())?,
            parts[1].parse().map_err(|_| bad())?,
            parts[2].parse().map_err(|_| bad())?,
            parts[3].parse().map_err(|_| bad())?,
            0,
        );
        spec.validate()?;
        Ok(spec)
    }
}

/// Lazily generated blob stream: only the label order is materialized.
pub struct BlobStream {
    spec: BlobSpec,
    centres: Vec<Vec<f64>>,
    labels: Vec<u32>,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    pos: usize,
}

impl BlobStream {
    pub fn centres(&self) -> &[Vec<f64>] {
        &self.centres
    }
}

/// Centres are drawn uniformly in a box scaled to `sep` and rejected when
/// closer than `sep` to an earlier one; the box grows if placement stalls.
/// Points arrive in a shuffled blob order.
pub fn gen_blobs(spec: BlobSpec) -> Result<BlobStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[10]));
    let mut side = spec.sep * (spec.k as f64).sqrt().max(1.0) * 2.0;
    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(spec.k);
    let mut misses = 0;
    while centres.len() < spec.k {
        let c: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(0.0..side)).collect();
        if centres.iter().all(|o| euclidean(o, &c) >= spec.sep) {
            centres.push(c);
            misses = 0;
        } else {
            misses += 1;
            if misses > 1000 {
                side *= 1.5;
                misses = 0;
            }
        }
    }
    let mut labels: Vec<u32> = (0..spec.k as u32)
        .flat_map(|l| std::iter::repeat_n(l, spec.per_blob))
        .collect();
    labels.shuffle(&mut rng);
    let noise = Normal::new(0.0, spec.stddev).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(BlobStream {
        rng: ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[11])),
        spec,
        centres,
        labels,
        noise,
        pos: 0,
    })
}

impl Iterator for BlobStream {
    type Item = Result<DataPoint>;

    fn next(&mut self) -> Option<Self::Item> {
        let label = *self.labels.get(self.pos)?;
        let shift = (self.pos / self.spec.window_size) as f64;
        let centre = &self.centres[label as usize];
        let coords = centre
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let drift = self.spec.drift.as_ref().map_or(0.0, |d| d[j] * shift);
                c + drift + self.noise.sample(&mut self.rng)
            })
            .collect();
        let p = DataPoint::new(coords, Some(label as i64), self.pos as u64);
        self.pos += 1;
        Some(Ok(p))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.labels.len() - self.pos;
        (left, Some(left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centres_are_separated() {
        for seed in 0..20 {
            let s = gen_blobs(BlobSpec::new(4, 10, 10.0, 0.5, seed)).unwrap();
            let c = s.centres();
            for i in 0..c.len() {
                for j in i + 1..c.len() {
                    assert!(euclidean(&c[i], &c[j]) >= 10.0);
                }
            }
        }
    }

    #[test]
    fn labels_are_balanced_and_stream_reproducible() {
        let a: Vec<DataPoint> = gen_blobs(BlobSpec::new(3, 50, 10.0, 0.5, 7)).unwrap().map(Result::unwrap).collect();
        let b: Vec<DataPoint> = gen_blobs(BlobSpec::new(3, 50, 10.0, 0.5, 7)).unwrap().map(Result::unwrap).collect();
        assert_eq!(a, b);
        assert_eq!(a.len(), 150);
        for l in 0..3 {
            assert_eq!(a.iter().filter(|p| p.label == Some(l)).count(), 50);
        }
    }

    #[test]
    fn drift_moves_later_windows() {
        let mut spec = BlobSpec::new(1, 400, 10.0, 0.01, 1);
        spec.drift = Some(vec![1.0, 0.0]);
        let pts: Vec<DataPoint> = gen_blobs(spec).unwrap().map(Result::unwrap).collect();
        let x0 = pts[0].coords[0];
        assert!((pts[399].coords[0] - x0 - 3.0).abs() < 0.1);
    }

    #[test]
    fn zero_drift_is_stationary() {
        let mut spec = BlobSpec::new(1, 300, 10.0, 0.01, 1);
        spec.drift = Some(vec![0.0, 0.0]);
        let pts: Vec<DataPoint> = gen_blobs(spec).unwrap().map(Result::unwrap).collect();
        assert!((pts[299].coords[0] - pts[0].coords[0]).abs() < 0.1);
    }

    #[test]
    fn spec_parsing_and_validation() {
        let s: BlobSpec = "4,1000,10,0.5".parse().unwrap();
        assert_eq!((s.k, s.per_blob, s.sep, s.stddev), (4, 1000, 10.0, 0.5));
        assert!("4,1000,10".parse::<BlobSpec>().is_err());
        assert!("0,10,10,1".parse::<BlobSpec>().is_err());
        assert!("2,10,-1,1".parse::<BlobSpec>().is_err());
    }
}
