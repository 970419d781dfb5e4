//! Synthetic data drawn from the GP prior: known latent functions for
//! generate-and-recover and coverage tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::data::EcgDataset;
use crate::kernel::{self, KernelError, KernelParams};
use crate::linalg::{cholesky, LinalgError, Matrix};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("need at least 2 points and dimension >= 1")]
    BadSpec,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec<F> {
    pub n_points: usize,
    pub dimension: usize,
    pub params: KernelParams<F>,
    pub seed: u64,
}

/// A prior draw: input points, the true latent values, and their signs.
#[derive(Debug, Clone)]
pub struct GpDraw<F> {
    pub points: Vec<F>,
    pub dimension: usize,
    pub latent: Vec<F>,
    pub signed_labels: Vec<i8>,
}

impl<F: Scalar> GpDraw<F> {
    pub fn n_points(&self) -> usize {
        self.latent.len()
    }

    pub fn point(&self, i: usize) -> &[F] {
        &self.points[i * self.dimension..(i + 1) * self.dimension]
    }

    /// As a two-class dataset: +1 -> class 0 (normal), -1 -> class 1.
    pub fn to_dataset(&self) -> EcgDataset<F> {
        let labels = self.signed_labels.iter().map(|&z| usize::from(z < 0)).collect();
        EcgDataset::new(
            self.points.clone(),
            self.dimension,
            labels,
            vec!["Normal".into(), "Abnormal".into()],
        )
    }
}

const SAMPLING_JITTER: f64 = 1e-10;

/// Samples points uniformly in the unit cube and a latent vector from
/// N(0, sigma2 * K); labels are the latent signs (zero counts as -1).
pub fn draw_gp<F: Scalar>(spec: &SyntheticSpec<F>) -> Result<GpDraw<F>, SyntheticError> {
    if spec.n_points < 1 || spec.dimension < 1 {
        return Err(SyntheticError::BadSpec);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_points;
    let d = spec.dimension;
    let points: Vec<F> = (0..n * d).map(|_| F::from_f64(rng.gen::<f64>()).unwrap()).collect();
    let row = |i: usize| &points[i * d..(i + 1) * d];

    let mut cov = Matrix::zeros(n, n);
    let jitter = F::from_f64(SAMPLING_JITTER).unwrap() * spec.params.sigma2;
    for i in 0..n {
        cov.set(i, i, spec.params.sigma2 + jitter);
        for j in 0..i {
            let v = kernel::matern(crate::linalg::euclidean(row(i), row(j)), &spec.params)?;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    let factor = cholesky(&cov)?;
    let u: Vec<F> =
        (0..n).map(|_| F::from_f64(rng.sample::<f64, _>(StandardNormal)).unwrap()).collect();
    let mut latent = vec![F::zero(); n];
    let lower = factor.lower();
    for i in 0..n {
        let mut s = F::zero();
        for j in 0..=i {
            s += lower.get(i, j) * u[j];
        }
        latent[i] = s;
    }
    let signed_labels = latent.iter().map(|&f| if f > F::zero() { 1 } else { -1 }).collect();
    Ok(GpDraw { points, dimension: d, latent, signed_labels })
}

/// Class sizes and shape for a surrogate heartbeat dataset.
#[derive(Debug, Clone)]
pub struct SurrogateSpec {
    pub class_counts: Vec<usize>,
    pub n_features: usize,
    pub seed: u64,
}

fn gauss(t: f64, center: f64, width: f64, amp: f64) -> f64 {
    let z = (t - center) / width;
    amp * (-z * z).exp()
}

/// Deterministic ECG-like beats: per-class bump templates plus per-sample
/// time shift, amplitude jitter, white noise, and a zero-padded tail, then
/// peak normalization into [0, 1]. A stand-in with the same shape and
/// imbalance structure as the preprocessed heartbeat CSVs for pipeline tests
/// when those files are not on disk.
pub fn surrogate_ecg<F: Scalar>(spec: &SurrogateSpec) -> Result<EcgDataset<F>, SyntheticError> {
    let n_classes = spec.class_counts.len();
    if n_classes < 2 || spec.n_features < 8 || spec.class_counts.iter().any(|&c| c == 0) {
        return Err(SyntheticError::BadSpec);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.n_features;
    let mut features = Vec::with_capacity(spec.class_counts.iter().sum::<usize>() * m);
    let mut labels = Vec::new();
    for (class, &count) in spec.class_counts.iter().enumerate() {
        let c = class as f64;
        for _ in 0..count {
            let shift: f64 = rng.gen_range(-0.02..0.02);
            let scale: f64 = 1.0 + rng.gen_range(-0.1..0.1);
            let cut = (m as f64 * rng.gen_range(0.7..1.0)) as usize;
            let mut beat = Vec::with_capacity(m);
            for j in 0..m {
                let t = j as f64 / m as f64 + shift;
                let v = if j < cut {
                    let qrs = gauss(t, 0.08, 0.02, 1.0);
                    let st = gauss(t, 0.32 + 0.06 * c, 0.05 + 0.012 * c, 0.45 + 0.08 * c);
                    let tw = gauss(t, 0.68 - 0.04 * c, 0.08, 0.25 + 0.03 * c);
                    scale * (qrs + st + tw) + rng.gen_range(-0.03..0.03)
                } else {
                    0.0
                };
                beat.push(v.max(0.0));
            }
            let peak = beat.iter().cloned().fold(0.0f64, f64::max).max(1e-9);
            features.extend(beat.iter().map(|v| F::from_f64(v / peak).unwrap()));
            labels.push(class);
        }
    }
    Ok(EcgDataset::new(features, m, labels, crate::data::default_class_names(n_classes)))
}
