//! Isotropic Matérn covariance and covariance-matrix assembly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky_jittered, euclidean, CholeskyFactor, LinalgError, Matrix};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("unsupported Matérn smoothness nu={0}; only 0.5, 1.5 and 2.5 are implemented")]
    UnsupportedNu(f64),
    #[error("dimension mismatch between point sets: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty point set")]
    EmptyPointSet,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Matérn hyperparameters: smoothness, length scale, noise variance and the
/// posterior variance scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams<F> {
    pub nu: F,
    pub length_scale: F,
    pub noise: F,
    pub sigma2: F,
}

impl<F: Scalar> Default for KernelParams<F> {
    fn default() -> Self {
        KernelParams {
            nu: F::from_f64(1.5).unwrap(),
            length_scale: F::one(),
            noise: F::from_f64(1e-5).unwrap(),
            sigma2: F::one(),
        }
    }
}

impl<F: Scalar> KernelParams<F> {
    pub fn validate(&self) -> Result<(), KernelError> {
        if self.length_scale <= F::zero()
            || self.nu <= F::zero()
            || self.noise < F::zero()
            || self.sigma2 <= F::zero()
        {
            return Err(KernelError::UnsupportedNu(self.nu.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(())
    }

    pub fn with_length_scale(mut self, l: F) -> Self {
        self.length_scale = l;
        self
    }

    pub fn with_sigma2(mut self, s: F) -> Self {
        self.sigma2 = s;
        self
    }
}

fn nu_case<F: Scalar>(nu: F) -> Result<u8, KernelError> {
    let half = F::from_f64(0.5).unwrap();
    let three_half = F::from_f64(1.5).unwrap();
    let five_half = F::from_f64(2.5).unwrap();
    let tol = F::from_f64(1e-9).unwrap();
    if (nu - half).abs() < tol {
        Ok(0)
    } else if (nu - three_half).abs() < tol {
        Ok(1)
    } else if (nu - five_half).abs() < tol {
        Ok(2)
    } else {
        Err(KernelError::UnsupportedNu(nu.to_f64().unwrap_or(f64::NAN)))
    }
}

/// Matérn evaluator with the nu dispatch and constants resolved once;
/// covariance assembly is quadratic in the neighborhood size, so the
/// per-entry cost here is what keeps the cubic solve visible.
#[derive(Debug, Clone, Copy)]
pub struct MaternEval<F> {
    case: u8,
    scale: F,
    sigma2: F,
}

impl<F: Scalar> MaternEval<F> {
    pub fn new(p: &KernelParams<F>) -> Result<Self, KernelError> {
        let case = nu_case(p.nu)?;
        let factor = match case {
            0 => 1.0,
            1 => 3f64.sqrt(),
            _ => 5f64.sqrt(),
        };
        Ok(MaternEval {
            case,
            scale: F::from_f64(factor).unwrap() / p.length_scale,
            sigma2: p.sigma2,
        })
    }

    #[inline]
    pub fn eval(&self, d: F) -> F {
        let s = d * self.scale;
        let v = match self.case {
            0 => (-s).exp(),
            1 => (F::one() + s) * (-s).exp(),
            _ => {
                let third = F::from_f64(1.0 / 3.0).unwrap();
                (F::one() + s + third * s * s) * (-s).exp()
            }
        };
        self.sigma2 * v
    }
}

/// Matérn covariance at distance `d` for half-integer nu in {1/2, 3/2, 5/2}.
pub fn matern<F: Scalar>(d: F, p: &KernelParams<F>) -> Result<F, KernelError> {
    Ok(MaternEval::new(p)?.eval(d))
}

/// Cross-covariance matrix K(A, B); no noise on any entry.
pub fn cross_covariance<F: Scalar>(
    a: &[&[F]],
    b: &[&[F]],
    p: &KernelParams<F>,
) -> Result<Matrix<F>, KernelError> {
    if let (Some(x), Some(y)) = (a.first(), b.first()) {
        if x.len() != y.len() {
            return Err(KernelError::DimensionMismatch(x.len(), y.len()));
        }
    }
    nu_case(p.nu)?;
    let mut out = Matrix::zeros(a.len(), b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out.set(i, j, matern(euclidean(x, y), p)?);
        }
    }
    Ok(out)
}

/// Noised training covariance K + eta^2 I, with its Cholesky factor and any
/// extra jitter that was needed to make the factorization succeed.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix<F> {
    pub values: Matrix<F>,
    pub factor: CholeskyFactor<F>,
    pub jitter_applied: F,
}

pub fn train_covariance<F: Scalar>(
    points: &[&[F]],
    p: &KernelParams<F>,
) -> Result<CovarianceMatrix<F>, KernelError> {
    if points.is_empty() {
        return Err(KernelError::EmptyPointSet);
    }
    nu_case(p.nu)?;
    let n = points.len();
    let mut values = Matrix::zeros(n, n);
    let diag = p.sigma2 + p.noise;
    for i in 0..n {
        values.set(i, i, diag);
        for j in 0..i {
            let v = matern(euclidean(points[i], points[j]), p)?;
            values.set(i, j, v);
            values.set(j, i, v);
        }
    }
    let (factor, jitter_applied) = cholesky_jittered(&values, p.sigma2)?;
    if jitter_applied > F::zero() {
        for i in 0..n {
            values.set(i, i, values.get(i, i) + jitter_applied);
        }
    }
    Ok(CovarianceMatrix { values, factor, jitter_applied })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn defaults() -> KernelParams<f64> {
        KernelParams::default()
    }

    #[test]
    fn matern_at_zero_is_sigma2() {
        assert_eq!(matern(0.0, &defaults()).unwrap(), 1.0);
        let p = defaults().with_sigma2(2.5);
        assert_eq!(matern(0.0, &p).unwrap(), 2.5);
    }

    #[test]
    fn matern_three_halves_closed_form() {
        // (1 + sqrt(3)) * exp(-sqrt(3)) at d = l = 1
        let s3 = 3.0f64.sqrt();
        let expected = (1.0 + s3) * (-s3).exp();
        assert_relative_eq!(matern(1.0, &defaults()).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 0.4833577245965077, max_relative = 1e-12);
    }

    #[test]
    fn matern_half_and_five_halves() {
        let mut p = defaults();
        p.nu = 0.5;
        assert_relative_eq!(matern(1.0, &p).unwrap(), (-1.0f64).exp(), max_relative = 1e-14);
        p.nu = 2.5;
        let s5 = 5.0f64.sqrt();
        let expected = (1.0 + s5 + s5 * s5 / 3.0) * (-s5).exp();
        assert_relative_eq!(matern(1.0, &p).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn matern_decays_to_zero() {
        let v = matern(100.0, &defaults()).unwrap();
        assert!(v < 1e-60);
    }

    #[test]
    fn unsupported_nu_rejected() {
        let mut p = defaults();
        p.nu = 1.0;
        assert!(matches!(matern(1.0, &p), Err(KernelError::UnsupportedNu(_))));
    }

    #[test]
    fn cross_covariance_single_point() {
        let a = vec![0.0, 0.0];
        let m = cross_covariance(&[&a], &[&a], &defaults()).unwrap();
        assert_eq!(m.rows(), 1);
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn cross_covariance_matches_matern() {
        let a = vec![0.0, 0.0];
        let b = vec![1.0, 0.0];
        let m = cross_covariance(&[&a[..]], &[&b[..]], &defaults()).unwrap();
        assert_relative_eq!(m.get(0, 0), 0.4833577245965077, max_relative = 1e-12);
    }

    #[test]
    fn cross_covariance_transposes() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 1.0], vec![0.3, 0.2], vec![0.9, 0.4]];
        let a: Vec<&[f64]> = pts[..2].iter().map(|v| v.as_slice()).collect();
        let b: Vec<&[f64]> = pts[1..].iter().map(|v| v.as_slice()).collect();
        let ab = cross_covariance(&a, &b, &defaults()).unwrap();
        let ba = cross_covariance(&b, &a, &defaults()).unwrap();
        assert_eq!(ab, ba.transpose());
    }

    #[test]
    fn train_covariance_single_point() {
        let x = vec![0.5];
        let cov = train_covariance(&[&x[..]], &defaults()).unwrap();
        assert_relative_eq!(cov.values.get(0, 0), 1.0 + 1e-5, max_relative = 1e-14);
    }

    #[test]
    fn duplicate_points_still_positive_definite() {
        let x = vec![0.5, 0.5];
        let cov = train_covariance(&[&x[..], &x[..]], &defaults()).unwrap();
        assert_relative_eq!(cov.values.get(0, 1), 1.0, max_relative = 1e-14);
        assert_relative_eq!(cov.values.get(0, 0), 1.0 + 1e-5, max_relative = 1e-12);
        assert!(cov.factor.smallest_pivot() > 0.0);
    }

    #[test]
    fn random_gram_factorizes_and_round_trips() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec<f64>> =
            (0..50).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|v| v.as_slice()).collect();
        let cov = train_covariance(&refs, &defaults()).unwrap();
        let rec = cov.factor.reconstruct();
        let mut max_err = 0.0f64;
        for i in 0..50 {
            for j in 0..50 {
                max_err = max_err.max((rec.get(i, j) - cov.values.get(i, j)).abs());
            }
        }
        assert!(max_err < 1e-10, "reconstruction error {max_err}");
        assert!(cov.values.asymmetry() < 1e-12);
    }

    proptest! {
        #[test]
        fn matern_non_increasing(d1 in 0.0f64..50.0, d2 in 0.0f64..50.0) {
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            let p = defaults();
            prop_assert!(matern(lo, &p).unwrap() >= matern(hi, &p).unwrap());
        }

        #[test]
        fn matern_scale_invariant(d in 0.0f64..10.0, c in 0.1f64..10.0) {
            let p = defaults();
            let scaled = defaults().with_length_scale(c);
            let v1 = matern(d, &p).unwrap();
            let v2 = matern(d * c, &scaled).unwrap();
            prop_assert!((v1 - v2).abs() < 1e-12);
        }
    }
}
