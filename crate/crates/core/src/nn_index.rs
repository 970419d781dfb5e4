//! Exact k-nearest-neighbor search over a training feature matrix.
//!
//! Brute force with selection; d is dense (80+ features), so tree pruning
//! buys nothing and exactness keeps downstream numbers free of index error.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::sq_dist;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("cannot build an index over an empty matrix")]
    EmptyMatrix,
    #[error("k={k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("query dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Neighbor indices and distances, ascending by (distance, index).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet<F> {
    pub indices: Vec<usize>,
    pub distances: Vec<F>,
}

/// Immutable exact-NN index over a row-major feature matrix.
#[derive(Debug, Clone)]
pub struct NnIndex<F> {
    features: Vec<F>,
    n_rows: usize,
    n_features: usize,
}

impl<F: Scalar> NnIndex<F> {
    pub fn build(features: Vec<F>, n_features: usize) -> Result<Self, NnError> {
        if features.is_empty() || n_features == 0 {
            return Err(NnError::EmptyMatrix);
        }
        assert_eq!(features.len() % n_features, 0);
        let n_rows = features.len() / n_features;
        Ok(NnIndex { features, n_rows, n_features })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    /// The k nearest training rows to `x`, ties broken by ascending index.
    /// `exclude_self` omits one training row (leave-one-out queries).
    pub fn query(
        &self,
        x: &[F],
        k: usize,
        exclude_self: Option<usize>,
    ) -> Result<NeighborSet<F>, NnError> {
        if x.len() != self.n_features {
            return Err(NnError::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        let max = self.n_rows - usize::from(exclude_self.is_some());
        if k == 0 || k > max {
            return Err(NnError::KOutOfRange { k, max });
        }
        let mut dists: Vec<(F, usize)> = Vec::with_capacity(max);
        for i in 0..self.n_rows {
            if exclude_self == Some(i) {
                continue;
            }
            dists.push((sq_dist(x, self.row(i)), i));
        }
        let cmp = |a: &(F, usize), b: &(F, usize)| {
            a.0.partial_cmp(&b.0).expect("non-NaN distance").then(a.1.cmp(&b.1))
        };
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, cmp);
            dists.truncate(k);
        }
        dists.sort_unstable_by(cmp);
        Ok(NeighborSet {
            indices: dists.iter().map(|&(_, i)| i).collect(),
            distances: dists.iter().map(|&(d, _)| d.sqrt()).collect(),
        })
    }

    /// Parallel queries for many points; output order matches input order.
    pub fn batch_query(
        &self,
        queries: &[&[F]],
        k: usize,
        exclude_self: Option<&[usize]>,
    ) -> Result<Vec<NeighborSet<F>>, NnError> {
        queries
            .par_iter()
            .enumerate()
            .map(|(qi, q)| self.query(q, k, exclude_self.map(|e| e[qi])))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn brute_force(
        rows: &[Vec<f64>],
        x: &[f64],
        k: usize,
        exclude: Option<usize>,
    ) -> (Vec<usize>, Vec<f64>) {
        let mut d: Vec<(f64, usize)> = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, r)| {
                (r.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i)
            })
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        d.truncate(k);
        (d.iter().map(|&(_, i)| i).collect(), d.iter().map(|&(x, _)| x).collect())
    }

    #[test]
    fn single_row_index() {
        let idx = NnIndex::build(vec![1.0, 2.0], 2).unwrap();
        let ns = idx.query(&[5.0, 5.0], 1, None).unwrap();
        assert_eq!(ns.indices, vec![0]);
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(matches!(NnIndex::<f64>::build(vec![], 2), Err(NnError::EmptyMatrix)));
    }

    #[test]
    fn self_query_at_distance_zero() {
        let idx = NnIndex::build(vec![0.0, 1.0, 2.0], 1).unwrap();
        let ns = idx.query(&[1.0], 1, None).unwrap();
        assert_eq!(ns.indices, vec![1]);
        assert_eq!(ns.distances, vec![0.0]);
    }

    #[test]
    fn collinear_exclude_self() {
        let idx = NnIndex::build(vec![0.0, 1.0, 2.0], 1).unwrap();
        let ns = idx.query(&[0.0], 2, Some(0)).unwrap();
        assert_eq!(ns.indices, vec![1, 2]);
        assert_eq!(ns.distances, vec![1.0, 2.0]);
    }

    #[test]
    fn ties_break_by_index() {
        // rows 0 and 1 are identical
        let idx = NnIndex::build(vec![1.0, 1.0, 3.0], 1).unwrap();
        let ns = idx.query(&[1.0], 2, None).unwrap();
        assert_eq!(ns.indices, vec![0, 1]);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> =
            (0..500).map(|_| (0..20).map(|_| rng.gen::<f64>()).collect()).collect();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let idx = NnIndex::build(flat, 20).unwrap();
        for _ in 0..20 {
            let q: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
            let ns = idx.query(&q, 50, None).unwrap();
            let (bi, bd) = brute_force(&rows, &q, 50, None);
            assert_eq!(ns.indices, bi);
            for (a, b) in ns.distances.iter().zip(bd) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // leave-one-out mode against the oracle
        let ns = idx.query(idx.row(7), 10, Some(7)).unwrap();
        let (bi, _) = brute_force(&rows, &rows[7], 10, Some(7));
        assert_eq!(ns.indices, bi);
        assert!(!ns.indices.contains(&7));
    }

    #[test]
    fn prefix_monotonicity_and_full_k() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let flat: Vec<f64> = (0..300).map(|_| rng.gen()).collect();
        let idx = NnIndex::build(flat, 3).unwrap();
        let q = vec![0.5, 0.5, 0.5];
        for k in 1..idx.n_rows() {
            let a = idx.query(&q, k, None).unwrap();
            let b = idx.query(&q, k + 1, None).unwrap();
            assert_eq!(a.indices[..], b.indices[..k]);
        }
        let all = idx.query(&q, idx.n_rows(), None).unwrap();
        assert_eq!(all.indices.len(), idx.n_rows());
        assert!(all.distances.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn k_out_of_range() {
        let idx = NnIndex::build(vec![0.0, 1.0], 1).unwrap();
        assert!(idx.query(&[0.0], 3, None).is_err());
        assert!(idx.query(&[0.0], 2, Some(0)).is_err());
        assert!(idx.query(&[0.0], 0, None).is_err());
    }
}
