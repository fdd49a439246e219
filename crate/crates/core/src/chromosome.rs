//! Flat chromosome encoding: `[compactness, separateness, w_1 .. w_K]`,
//! i.e. `K * d + 2` reals, one prototype block of `d` values per cluster.
//!
//! On disk a record is one line of comma-separated reals written with the
//! shortest round-tripping decimal form.

use crate::error::{Error, Result};
use crate::model::{ClusterSummary, ClusteringSolution, ObjectiveVector, Origin, SolutionId};

pub fn serialize_chromosome(solution: &ClusteringSolution) -> Vec<f64> {
    let mut record = Vec::with_capacity(2 + solution.k() * solution.dim());
    record.push(solution.objectives.compactness);
    record.push(solution.objectives.separateness);
    for c in &solution.clusters {
        record.extend_from_slice(&c.prototype);
    }
    record
}

/// Inverse of [`serialize_chromosome`]. Only the objectives and prototypes
/// travel in the record; every decoded cluster gets unit count and weight.
pub fn deserialize_chromosome(record: &[f64], d: usize) -> Result<ClusteringSolution> {
    let arity_err = || Error::ChromosomeArity {
        len: record.len(),
        d,
    };
    if d == 0 || record.len() < d + 2 || (record.len() - 2) % d != 0 {
        return Err(arity_err());
    }
    let clusters = record[2..]
        .chunks_exact(d)
        .map(|block| ClusterSummary::new(block.to_vec(), 1.0))
        .collect();
    let mut s = ClusteringSolution::new(clusters, Origin::Crossover, SolutionId(0));
    s.objectives = ObjectiveVector::new(record[0], record[1]);
    Ok(s)
}

pub fn format_record(record: &[f64]) -> String {
    let mut out = String::with_capacity(record.len() * 8);
    for (i, v) in record.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&v.to_string());
    }
    out
}

/// Parses one record line. Every field must be a finite real.
pub fn parse_record_line(line: &str) -> Result<Vec<f64>> {
    let line = line.trim_end_matches(['\n', '\r']);
    if line.trim().is_empty() {
        return Err(Error::EmptyInput);
    }
    line.split(',')
        .enumerate()
        .map(|(i, field)| {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: 1,
                message: format!("field {i}: not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("field {i}: non-finite value"),
                });
            }
            Ok(v)
        })
        .collect()
}

/// Parses a record line and decodes it for dimensionality `d`.
pub fn decode_line(line: &str, d: usize) -> Result<ClusteringSolution> {
    deserialize_chromosome(&parse_record_line(line)?, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ClusteringSolution {
        let mut s = ClusteringSolution::new(
            vec![
                ClusterSummary::new(vec![0.0, 0.0], 1.0),
                ClusterSummary::new(vec![1.0, 1.0], 1.0),
            ],
            Origin::Kmeans,
            SolutionId(3),
        );
        s.objectives = ObjectiveVector::new(3.0, 1.5);
        s
    }

    #[test]
    fn layout() {
        assert_eq!(
            serialize_chromosome(&sample()),
            vec![3.0, 1.5, 0.0, 0.0, 1.0, 1.0]
        );
    }

    #[test]
    fn decode() {
        let s = deserialize_chromosome(&[3.0, 1.5, 0.0, 0.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(s.objectives, ObjectiveVector::new(3.0, 1.5));
        assert_eq!(s.k(), 2);
        assert_eq!(s.clusters[1].prototype, vec![1.0, 1.0]);
    }

    #[test]
    fn arity_errors() {
        let err = deserialize_chromosome(&[3.0, 1.5, 0.0], 2).unwrap_err();
        assert!(matches!(err, Error::ChromosomeArity { len: 3, d: 2 }));
        assert!(err.to_string().contains("2 + K*2"));
        assert!(deserialize_chromosome(&[3.0, 1.5], 2).is_err());
        assert!(deserialize_chromosome(&[3.0, 1.5, 1.0], 0).is_err());
    }

    #[test]
    fn text_lines() {
        let line = format_record(&serialize_chromosome(&sample()));
        assert_eq!(line, "3,1.5,0,0,1,1");
        assert_eq!(decode_line(&line, 2).unwrap().clusters[0].prototype, vec![0.0, 0.0]);
        assert!(parse_record_line("1,x").is_err());
        assert!(parse_record_line("1,NaN").is_err());
        assert!(parse_record_line("").is_err());
    }

    fn arb_solution() -> impl Strategy<Value = ClusteringSolution> {
        (1usize..6, 1usize..16).prop_flat_map(|(d, k)| {
            (
                prop::collection::vec(prop::collection::vec(-1e6f64..1e6, d), k),
                0.0f64..1e6,
                0.0f64..1e6,
            )
                .prop_map(|(protos, c, s)| {
                    let mut sol = ClusteringSolution::new(
                        protos.into_iter().map(|p| ClusterSummary::new(p, 1.0)).collect(),
                        Origin::Mutation,
                        SolutionId(0),
                    );
                    sol.objectives = ObjectiveVector::new(c, s);
                    sol
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip(s in arb_solution()) {
            let d = s.dim();
            let line = format_record(&serialize_chromosome(&s));
            let back = decode_line(&line, d).unwrap();
            prop_assert_eq!(back.objectives, s.objectives);
            prop_assert_eq!(back.k(), s.k());
            for (a, b) in back.clusters.iter().zip(&s.clusters) {
                prop_assert_eq!(&a.prototype, &b.prototype);
            }
        }
    }
}
