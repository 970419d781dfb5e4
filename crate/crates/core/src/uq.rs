//! Prediction-interval uncertainty: ambiguity flagging, variance-scale
//! calibration by minimizing alpha + (1 - beta), and one-vs-all union
//! semantics for multi-class problems.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EcgDataset;
use crate::local_gp::{LatentPrediction, MuyGpsError, MuyGpsModel, Prediction};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum UqError {
    #[error("empty calibration grid")]
    EmptyGrid,
    #[error("per-class prediction lists have mismatched lengths")]
    LengthMismatch,
    #[error(transparent)]
    MuyGps(#[from] MuyGpsError),
}

/// Interval half-width multipliers and their nominal confidence levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauGrid {
    pub taus: Vec<f64>,
    pub confidences: Vec<f64>,
}

impl Default for TauGrid {
    fn default() -> Self {
        TauGrid {
            taus: vec![0.994, 1.28, 1.64, 1.96, 2.58],
            confidences: vec![0.68, 0.80, 0.90, 0.95, 0.99],
        }
    }
}

impl TauGrid {
    pub fn validate(&self) -> bool {
        self.taus.len() == self.confidences.len()
            && self.taus.windows(2).all(|w| w[0] < w[1])
    }
}

/// True iff the interval mean +- tau * sqrt(variance) contains `boundary`.
/// The interval is closed: a boundary sitting exactly on an endpoint is
/// ambiguous.
pub fn flag_ambiguous<F: Scalar>(pred: &LatentPrediction<F>, tau: F, boundary: F) -> bool {
    let half = tau * pred.variance.sqrt();
    boundary >= pred.mean - half && boundary <= pred.mean + half
}

/// Interval rule over repeated-run probability estimates: ambiguous iff
/// 0.5 is inside mean_prob +- tau * sqrt(var_prob).
pub fn probabilistic_ambiguity<F: Scalar>(mean_prob: F, var_prob: F, tau: F) -> bool {
    let half = tau * var_prob.sqrt();
    let boundary = F::from_f64(0.5).unwrap();
    boundary >= mean_prob - half && boundary <= mean_prob + half
}

/// Union of per-class ambiguity flags: a point is uncertain overall if it is
/// uncertain for any class.
pub fn ova_uncertain_union<F: Scalar>(
    per_class_preds: &[Vec<LatentPrediction<F>>],
    tau: F,
) -> Result<Vec<bool>, UqError> {
    let n = per_class_preds.first().map_or(0, |v| v.len());
    if per_class_preds.iter().any(|v| v.len() != n) {
        return Err(UqError::LengthMismatch);
    }
    let mut flags = vec![false; n];
    for class_preds in per_class_preds {
        for (flag, pred) in flags.iter_mut().zip(class_preds) {
            *flag = *flag || flag_ambiguous(pred, tau, F::zero());
        }
    }
    Ok(flags)
}

/// Ambiguity of a full (possibly multi-latent) prediction: the boundary-0
/// interval test per latent, combined by union.
pub fn prediction_ambiguous<F: Scalar>(pred: &Prediction<F>, tau: F) -> bool {
    pred.latents.iter().any(|l| flag_ambiguous(l, tau, F::zero()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult<F> {
    pub sigma2: F,
    pub alpha: f64,
    pub one_minus_beta: f64,
    pub objective: f64,
}

/// 25 log-spaced candidate scales in [1e-2, 1e2] times `base`.
pub fn default_scale_grid<F: Scalar>(base: F) -> Vec<F> {
    let n = 25;
    (0..n)
        .map(|i| {
            let t = -2.0 + 4.0 * (i as f64) / (n - 1) as f64;
            base * F::from_f64(10f64.powf(t)).unwrap()
        })
        .collect()
}

fn objective_at<F: Scalar>(
    preds: &[Prediction<F>],
    unit_vars: &[Vec<F>],
    truth: &[usize],
    tau: F,
    scale: F,
) -> (f64, f64) {
    let n = preds.len();
    let mut wrong_confident = 0usize;
    let mut right_ambiguous = 0usize;
    for ((pred, vars), &t) in preds.iter().zip(unit_vars).zip(truth) {
        let ambiguous = pred.latents.iter().zip(vars).any(|(l, &v)| {
            let scaled = LatentPrediction { mean: l.mean, variance: scale * v, label: l.label };
            flag_ambiguous(&scaled, tau, F::zero())
        });
        let correct = pred.label == t;
        if !correct && !ambiguous {
            wrong_confident += 1;
        }
        if correct && ambiguous {
            right_ambiguous += 1;
        }
    }
    (wrong_confident as f64 / n as f64, right_ambiguous as f64 / n as f64)
}

/// Chooses the variance scale minimizing alpha + (1 - beta) on a labeled
/// holdout, ties to the smallest scale. alpha counts confident-but-wrong
/// points, (1 - beta) ambiguous-but-correct ones.
pub fn calibrate_sigma2<F: Scalar>(
    model: &MuyGpsModel<F>,
    holdout: &EcgDataset<F>,
    tau: F,
    scale_grid: &[F],
) -> Result<CalibrationResult<F>, UqError> {
    if scale_grid.is_empty() {
        return Err(UqError::EmptyGrid);
    }
    if holdout.n_samples() < 10 {
        eprintln!(
            "warning: calibrating sigma2 on only {} holdout samples",
            holdout.n_samples()
        );
    }
    let rows: Vec<&[F]> = holdout.rows().collect();
    let preds = model.predict(&rows)?;
    // variance scales linearly in sigma2, so predict once and rescale
    let unit_vars: Vec<Vec<F>> = preds
        .iter()
        .map(|p| p.latents.iter().map(|l| l.variance / model.params.sigma2).collect())
        .collect();
    let mut best: Option<CalibrationResult<F>> = None;
    for &scale in scale_grid {
        let (alpha, one_minus_beta) =
            objective_at(&preds, &unit_vars, holdout.labels(), tau, scale);
        let objective = alpha + one_minus_beta;
        let better = match &best {
            None => true,
            Some(b) => {
                objective < b.objective - 1e-15
                    || (objective <= b.objective + 1e-15 && scale < b.sigma2)
            }
        };
        if better {
            best = Some(CalibrationResult { sigma2: scale, alpha, one_minus_beta, objective });
        }
    }
    Ok(best.unwrap())
}

/// Mean unit-scale local prior-to-posterior variance over a holdout; the
/// anchor for the default calibration grid.
pub fn mean_unit_variance<F: Scalar>(
    model: &MuyGpsModel<F>,
    holdout: &EcgDataset<F>,
) -> Result<F, UqError> {
    let rows: Vec<&[F]> = holdout.rows().collect();
    let preds = model.predict(&rows)?;
    let total: F = preds
        .iter()
        .map(|p| p.latents[0].variance / model.params.sigma2)
        .sum();
    Ok(total / F::from_usize(preds.len().max(1)).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EcgDataset;
    use crate::kernel::KernelParams;
    use rand::prelude::*;

    fn lp(mean: f64, variance: f64) -> LatentPrediction<f64> {
        LatentPrediction::from_posterior(mean, variance)
    }

    #[test]
    fn flag_interval_arithmetic() {
        // mean 0.1, sd 0.2, tau 1.96 -> [-0.292, 0.492] contains 0
        assert!(flag_ambiguous(&lp(0.1, 0.04), 1.96, 0.0));
        assert!(!flag_ambiguous(&lp(1.0, 0.0001), 2.58, 0.0));
        assert!(flag_ambiguous(&lp(0.0, 0.5), 0.1, 0.0));
        assert!(flag_ambiguous(&lp(0.0, 0.0), 0.994, 0.0));
    }

    #[test]
    fn flag_closed_endpoint() {
        // boundary exactly at mean - tau*sd
        assert!(flag_ambiguous(&lp(0.2, 0.01), 2.0, 0.0));
    }

    #[test]
    fn flag_monotone_in_tau() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let p = lp(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>());
            let t1 = rng.gen::<f64>() * 3.0 + 0.01;
            let t2 = t1 + rng.gen::<f64>();
            if flag_ambiguous(&p, t1, 0.0) {
                assert!(flag_ambiguous(&p, t2, 0.0));
            }
        }
    }

    #[test]
    fn flag_scale_invariant_at_zero_boundary() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(18);
        for _ in 0..500 {
            let mean = rng.gen::<f64>() * 2.0 - 1.0;
            let var = rng.gen::<f64>();
            let tau = rng.gen::<f64>() * 3.0 + 0.01;
            let c: f64 = rng.gen::<f64>() * 10.0 + 0.1;
            let a = flag_ambiguous(&lp(mean, var), tau, 0.0);
            let b = flag_ambiguous(&lp(c * mean, c * c * var), tau, 0.0);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn probabilistic_rule_examples() {
        assert!(probabilistic_ambiguity(0.5, 0.2, 0.01));
        assert!(!probabilistic_ambiguity(0.9, 0.0, 2.58));
        // mean 0.6, sd 0.1: tau=0.994 -> [0.5006, 0.6994] misses 0.5
        assert!(!probabilistic_ambiguity(0.6, 0.01, 0.994));
        // tau=1.28 -> [0.472, 0.728] contains 0.5
        assert!(probabilistic_ambiguity(0.6, 0.01, 1.28));
    }

    #[test]
    fn union_semantics() {
        let class_a = vec![lp(1.0, 0.0001), lp(1.0, 0.0001)];
        let class_b = vec![lp(-1.0, 0.0001), lp(0.01, 1.0)];
        // single class: equals its own flags
        let single = ova_uncertain_union(&[class_a.clone()], 1.96).unwrap();
        assert_eq!(single, vec![false, false]);
        // second point ambiguous only for class b -> uncertain overall
        let both = ova_uncertain_union(&[class_a, class_b], 1.96).unwrap();
        assert_eq!(both, vec![false, true]);
    }

    #[test]
    fn union_matches_set_union_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let n = 200;
        let per_class: Vec<Vec<LatentPrediction<f64>>> = (0..5)
            .map(|_| {
                (0..n).map(|_| lp(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 0.2)).collect()
            })
            .collect();
        let tau = 1.64;
        let flags = ova_uncertain_union(&per_class, tau).unwrap();
        let mut union = std::collections::BTreeSet::new();
        for preds in &per_class {
            for (i, p) in preds.iter().enumerate() {
                if flag_ambiguous(p, tau, 0.0) {
                    union.insert(i);
                }
            }
        }
        assert_eq!(flags.iter().filter(|&&f| f).count(), union.len());
        for i in &union {
            assert!(flags[*i]);
        }
    }

    #[test]
    fn union_rejects_mismatched_lengths() {
        let a = vec![lp(0.0, 1.0)];
        let b = vec![lp(0.0, 1.0), lp(1.0, 1.0)];
        assert!(matches!(ova_uncertain_union(&[a, b], 1.0), Err(UqError::LengthMismatch)));
    }

    fn clustered_dataset(n_per: usize, seed: u64) -> EcgDataset<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2usize {
            for _ in 0..n_per {
                features.push(c as f64 * 4.0 + rng.gen::<f64>());
                features.push(c as f64 * 4.0 + rng.gen::<f64>());
                labels.push(c);
            }
        }
        EcgDataset::new(features, 2, labels, vec!["Normal".into(), "Abnormal".into()])
    }

    #[test]
    fn calibration_matches_exhaustive_recount() {
        let train = clustered_dataset(40, 1);
        let holdout = clustered_dataset(25, 2);
        let model = MuyGpsModel::new(&train, KernelParams::default(), 10).unwrap();
        let grid = vec![0.25, 0.5, 1.0, 2.0, 4.0];
        let result = calibrate_sigma2(&model, &holdout, 1.96, &grid).unwrap();

        // oracle: recompute alpha + (1 - beta) per grid point from scratch
        let rows: Vec<&[f64]> = holdout.rows().collect();
        let mut best = (f64::INFINITY, f64::INFINITY);
        for &s in &grid {
            let mut scaled_model = MuyGpsModel::new(&train, KernelParams::default(), 10).unwrap();
            scaled_model.params.sigma2 = s;
            let preds = scaled_model.predict(&rows).unwrap();
            let mut alpha = 0.0;
            let mut omb = 0.0;
            for (p, &t) in preds.iter().zip(holdout.labels()) {
                let amb = prediction_ambiguous(p, 1.96);
                let correct = p.label == t;
                if !correct && !amb {
                    alpha += 1.0;
                }
                if correct && amb {
                    omb += 1.0;
                }
            }
            let obj = (alpha + omb) / holdout.n_samples() as f64;
            if obj < best.0 - 1e-15 {
                best = (obj, s);
            }
        }
        assert!((result.objective - best.0).abs() < 1e-12);
        assert_eq!(result.sigma2, best.1);
    }

    #[test]
    fn calibration_limits() {
        let train = clustered_dataset(40, 3);
        let holdout = clustered_dataset(25, 4);
        let model = MuyGpsModel::new(&train, KernelParams::default(), 10).unwrap();
        let rows: Vec<&[f64]> = holdout.rows().collect();
        let preds = model.predict(&rows).unwrap();
        let accuracy = preds
            .iter()
            .zip(holdout.labels())
            .filter(|(p, &t)| p.label == t)
            .count() as f64
            / holdout.n_samples() as f64;

        // giant scale: everything ambiguous -> alpha 0, 1-beta = accuracy
        let huge = calibrate_sigma2(&model, &holdout, 1.96, &[1e12]).unwrap();
        assert_eq!(huge.alpha, 0.0);
        assert!((huge.one_minus_beta - accuracy).abs() < 1e-12);

        // tiny scale: nothing ambiguous (variance floor aside) -> 1-beta 0
        let tiny = calibrate_sigma2(&model, &holdout, 1.96, &[1e-20]).unwrap();
        assert_eq!(tiny.one_minus_beta, 0.0);
        assert!((tiny.alpha - (1.0 - accuracy)).abs() < 1e-12);
    }

    #[test]
    fn separable_toy_reaches_zero_objective() {
        let train = clustered_dataset(40, 5);
        let holdout = clustered_dataset(30, 6);
        let model = MuyGpsModel::new(&train, KernelParams::default(), 10).unwrap();
        let grid = default_scale_grid(1e-4);
        let result = calibrate_sigma2(&model, &holdout, 1.96, &grid).unwrap();
        assert_eq!(result.objective, 0.0);
    }

    #[test]
    fn empty_grid_rejected() {
        let train = clustered_dataset(20, 7);
        let model = MuyGpsModel::new(&train, KernelParams::default(), 5).unwrap();
        assert!(matches!(
            calibrate_sigma2(&model, &train, 1.96, &[]),
            Err(UqError::EmptyGrid)
        ));
    }
}
