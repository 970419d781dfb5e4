//! k-nearest-neighbor classifier baseline with a bootstrap repeated-run
//! protocol for probability means/variances (KNN is deterministic, so the
//! ensemble randomness comes from resampling the training rows).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::EcgDataset;
use crate::nn_index::{NnError, NnIndex};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum KnnError {
    #[error("repeated runs require runs >= 2, got {0}")]
    TooFewRuns(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub struct KnnModel<F> {
    pub k: usize,
    index: NnIndex<F>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl<F: Scalar> KnnModel<F> {
    pub fn fit(train: &EcgDataset<F>, k: usize) -> Result<Self, KnnError> {
        let index = NnIndex::build(train.features().to_vec(), train.n_features())?;
        if k == 0 || k > train.n_samples() {
            return Err(NnError::KOutOfRange { k, max: train.n_samples() }.into());
        }
        Ok(KnnModel { k, index, labels: train.labels().to_vec(), n_classes: train.n_classes() })
    }

    /// Majority vote over the k nearest neighbors; ties go to the smallest
    /// class id. Returns the label and per-class vote fractions.
    pub fn predict_point(&self, x: &[F]) -> Result<(usize, Vec<F>), KnnError> {
        let ns = self.index.query(x, self.k, None)?;
        let mut votes = vec![0usize; self.n_classes];
        for &i in &ns.indices {
            votes[self.labels[i]] += 1;
        }
        let label = votes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .unwrap();
        let kf = F::from_usize(self.k).unwrap();
        let fractions = votes.iter().map(|&v| F::from_usize(v).unwrap() / kf).collect();
        Ok((label, fractions))
    }

    pub fn predict(&self, test: &[&[F]]) -> Result<Vec<(usize, Vec<F>)>, KnnError> {
        test.par_iter().map(|x| self.predict_point(x)).collect()
    }
}

/// Fits KNN on `runs` bootstrap resamples and returns, per test point, the
/// mean and unbiased variance of the vote fraction for `positive_class`.
pub fn knn_repeated_runs<F: Scalar>(
    train: &EcgDataset<F>,
    test: &[&[F]],
    k: usize,
    runs: usize,
    seed: u64,
    positive_class: usize,
) -> Result<Vec<(F, F)>, KnnError> {
    if runs < 2 {
        return Err(KnnError::TooFewRuns(runs));
    }
    // runs x m matrix of positive-class vote fractions
    let matrix: Result<Vec<Vec<F>>, KnnError> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64));
            let indices: Vec<usize> =
                (0..train.n_samples()).map(|_| rng.gen_range(0..train.n_samples())).collect();
            let resample = train.select(&indices);
            let model = KnnModel::fit(&resample, k)?;
            let preds = model.predict(test)?;
            Ok(preds.into_iter().map(|(_, fr)| fr[positive_class]).collect())
        })
        .collect();
    let matrix = matrix?;
    Ok(summarize_runs(&matrix))
}

/// Column-wise mean and unbiased variance of a runs x m probability matrix.
pub fn summarize_runs<F: Scalar>(matrix: &[Vec<F>]) -> Vec<(F, F)> {
    let runs = matrix.len();
    let m = matrix[0].len();
    let rf = F::from_usize(runs).unwrap();
    (0..m)
        .map(|j| {
            let mean: F = matrix.iter().map(|row| row[j]).sum::<F>() / rf;
            let var: F = matrix
                .iter()
                .map(|row| {
                    let d = row[j] - mean;
                    d * d
                })
                .sum::<F>()
                / F::from_usize(runs - 1).unwrap();
            (mean, var)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EcgDataset<f64> {
        EcgDataset::new(
            vec![0.0, 0.1, 0.2, 5.0, 5.1, 5.2],
            1,
            vec![0, 0, 0, 1, 1, 1],
            vec!["Normal".into(), "Abnormal".into()],
        )
    }

    #[test]
    fn majority_vote_counting() {
        let model = KnnModel::fit(&toy(), 3).unwrap();
        // nearest 3 to 0.15: rows 1, 2, 0 -> all class 0
        let (label, fr) = model.predict_point(&[0.15]).unwrap();
        assert_eq!(label, 0);
        assert_eq!(fr, vec![1.0, 0.0]);
        // 2-vs-1 split: rows 3 (d=2.3), 4 (d=2.4), then a 2.5 tie between
        // rows 2 and 5 broken toward the smaller index
        let (label, fr) = model.predict_point(&[2.7]).unwrap();
        assert_eq!(label, 1);
        assert!((fr[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((fr[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((fr.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn k1_reproduces_training_labels() {
        let ds = toy();
        let model = KnnModel::fit(&ds, 1).unwrap();
        for i in 0..ds.n_samples() {
            let (label, _) = model.predict_point(ds.row(i)).unwrap();
            assert_eq!(label, ds.labels()[i]);
        }
    }

    #[test]
    fn tie_goes_to_smallest_class() {
        let ds = EcgDataset::new(
            vec![0.0, 1.0],
            1,
            vec![1, 0],
            vec!["Normal".into(), "Abnormal".into()],
        );
        let model = KnnModel::fit(&ds, 2).unwrap();
        let (label, _) = model.predict_point(&[0.5]).unwrap();
        assert_eq!(label, 0);
    }

    #[test]
    fn vote_fractions_are_multiples_of_inverse_k() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let n = 50;
        let features: Vec<f64> = (0..n * 2).map(|_| rng.gen()).collect();
        let labels: Vec<usize> = (0..n).map(|_| usize::from(rng.gen::<bool>())).collect();
        let ds = EcgDataset::new(features, 2, labels, vec!["a".into(), "b".into()]);
        let model = KnnModel::fit(&ds, 7).unwrap();
        for _ in 0..20 {
            let q = [rng.gen::<f64>(), rng.gen::<f64>()];
            let (_, fr) = model.predict_point(&q).unwrap();
            for f in &fr {
                let scaled = f * 7.0;
                assert!((scaled - scaled.round()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unanimous_neighbors_have_zero_variance() {
        // two far clusters: every bootstrap keeps the clusters intact, so
        // every run votes unanimously
        let ds = toy();
        let q = vec![0.1f64];
        let out = knn_repeated_runs(&ds, &[&q[..]], 1, 10, 3, 0).unwrap();
        assert_eq!(out[0].0, 1.0);
        assert_eq!(out[0].1, 0.0);
    }

    #[test]
    fn identical_resamples_have_zero_variance() {
        // both runs use the same derived seed stream when seeds collide
        let ds = toy();
        let q = vec![3.4f64];
        let a = knn_repeated_runs(&ds, &[&q[..]], 3, 2, 7, 0).unwrap();
        let b = knn_repeated_runs(&ds, &[&q[..]], 3, 2, 7, 0).unwrap();
        assert_eq!(a, b); // determinism
    }

    #[test]
    fn summary_matches_recount_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let n = 200;
        let features: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let labels: Vec<usize> = (0..n).map(|i| usize::from(features[i] > 0.5)).collect();
        let ds = EcgDataset::new(features, 1, labels, vec!["a".into(), "b".into()]);
        let queries: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.gen::<f64>()]).collect();
        let qrefs: Vec<&[f64]> = queries.iter().map(|v| v.as_slice()).collect();
        let runs = 30;
        let out = knn_repeated_runs(&ds, &qrefs, 3, runs, 9, 0).unwrap();

        // independent recomputation from the stored probability matrix
        let matrix: Vec<Vec<f64>> = (0..runs)
            .map(|run| {
                let mut rng = ChaCha8Rng::seed_from_u64(9u64.wrapping_add(run as u64));
                let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let model = KnnModel::fit(&ds.select(&idx), 3).unwrap();
                qrefs.iter().map(|q| model.predict_point(q).unwrap().1[0]).collect()
            })
            .collect();
        for (j, &(mean, var)) in out.iter().enumerate() {
            let col: Vec<f64> = matrix.iter().map(|r| r[j]).collect();
            let m = col.iter().sum::<f64>() / runs as f64;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (runs - 1) as f64;
            assert!((mean - m).abs() < 1e-12);
            assert!((var - v).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&mean));
            assert!(var <= 0.25 + 1e-12);
        }
    }

    #[test]
    fn too_few_runs_rejected() {
        let ds = toy();
        let q = vec![0.0f64];
        assert!(matches!(
            knn_repeated_runs(&ds, &[&q[..]], 1, 1, 0, 0),
            Err(KnnError::TooFewRuns(1))
        ));
    }
}
