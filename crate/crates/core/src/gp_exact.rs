//! Full Gaussian process classification by regression on {+1,-1} labels.
//!
//! Serves both as a baseline and as the oracle the local-kriging model is
//! checked against. All solves go through one Cholesky factorization of the
//! noised train covariance; no explicit inverses.
//!
//! Internally the kernel is evaluated at unit variance; `sigma2` enters only
//! as a multiplicative scale on the posterior variance, which keeps the
//! posterior mean independent of the calibrated scale.

use rayon::prelude::*;
use thiserror::Error;

use crate::data::SignedLabels;
use crate::kernel::{self, KernelError, KernelParams};
use crate::linalg::CholeskyFactor;
use crate::Scalar;

/// Full GP is cubic in n_train; beyond this it is the wrong tool.
pub const MAX_TRAIN: usize = 20_000;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("training set of {n} rows exceeds the exact-GP cap of {max}", max = MAX_TRAIN)]
    TooLarge { n: usize },
    #[error("label count {labels} does not match training rows {rows}")]
    LabelMismatch { labels: usize, rows: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Posterior mean and variance per test point.
#[derive(Debug, Clone)]
pub struct GpPosterior<F> {
    pub mean: Vec<F>,
    pub variance: Vec<F>,
}

/// Fitted exact GP: factored train covariance plus kriging weights.
pub struct GpModel<'a, F> {
    train: Vec<&'a [F]>,
    params: KernelParams<F>,
    factor: CholeskyFactor<F>,
    /// (K + eta^2 I)^-1 z
    alpha: Vec<F>,
    pub jitter_applied: F,
}

impl<'a, F: Scalar> GpModel<'a, F> {
    pub fn fit(
        train: Vec<&'a [F]>,
        z: &SignedLabels,
        params: &KernelParams<F>,
    ) -> Result<Self, GpError> {
        let zf: Vec<F> = z.as_scalars();
        if z.len() != train.len() {
            return Err(GpError::LabelMismatch { labels: z.len(), rows: train.len() });
        }
        Self::fit_values(train, &zf, params)
    }

    /// Regression form: condition on arbitrary real-valued observations.
    pub fn fit_values(
        train: Vec<&'a [F]>,
        z: &[F],
        params: &KernelParams<F>,
    ) -> Result<Self, GpError> {
        let n = train.len();
        if n > MAX_TRAIN {
            return Err(GpError::TooLarge { n });
        }
        if z.len() != n {
            return Err(GpError::LabelMismatch { labels: z.len(), rows: n });
        }
        let unit = params.with_sigma2(F::one());
        let cov = kernel::train_covariance(&train, &unit)?;
        let alpha = cov.factor.solve(z).map_err(KernelError::from)?;
        Ok(GpModel {
            train,
            params: *params,
            factor: cov.factor,
            alpha,
            jitter_applied: cov.jitter_applied,
        })
    }

    /// Posterior mean and sigma2-scaled variance for each test row.
    pub fn predict(&self, test: &[&[F]]) -> Result<GpPosterior<F>, GpError> {
        let unit = self.params.with_sigma2(F::one());
        let floor = F::from_f64(1e-12).unwrap();
        let results: Result<Vec<(F, F)>, GpError> = test
            .par_iter()
            .map(|x| {
                let k: Vec<F> = self
                    .train
                    .iter()
                    .map(|t| kernel::matern(crate::linalg::euclidean(x, t), &unit))
                    .collect::<Result<_, _>>()?;
                let mean = k.iter().zip(&self.alpha).map(|(a, b)| *a * *b).sum();
                let v = self.factor.solve(&k).map_err(KernelError::from)?;
                let q: F = k.iter().zip(&v).map(|(a, b)| *a * *b).sum();
                let var = self.params.sigma2 * (F::one() - q);
                Ok((mean, if var < floor { floor } else { var }))
            })
            .collect();
        let results = results?;
        Ok(GpPosterior {
            mean: results.iter().map(|r| r.0).collect(),
            variance: results.iter().map(|r| r.1).collect(),
        })
    }
}

/// One-shot fit + predict.
pub fn gp_fit_predict<F: Scalar>(
    train: &[&[F]],
    z: &SignedLabels,
    test: &[&[F]],
    params: &KernelParams<F>,
) -> Result<GpPosterior<F>, GpError> {
    GpModel::fit(train.to_vec(), z, params)?.predict(test)
}

/// Sign rule: positive latent means class +1; an exact zero is -1.
pub fn classify<F: Scalar>(post: &GpPosterior<F>) -> Vec<i8> {
    post.mean.iter().map(|&m| if m > F::zero() { 1 } else { -1 }).collect()
}
