//! Local-kriging GP classification: each prediction is conditioned only on
//! the k nearest training neighbors, and kernel hyperparameters are trained
//! by batched leave-one-out cross-entropy.
//!
//! The local system solved per point is (K_NN + eta^2 I) at unit variance;
//! `sigma2` scales the reported posterior variance only, so calibrating it
//! never changes the latent means. For multi-class data one signed label
//! vector per class shares the neighborhoods and the per-point factorization,
//! since only the right-hand side differs between classes.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{sample_batch, DataError, EcgDataset, SignedLabels};
use crate::kernel::{self, KernelError, KernelParams};
use crate::linalg::{cholesky_in_place, cholesky_jittered, LinalgError, Matrix};
use crate::nn_index::{NeighborSet, NnError, NnIndex};
use crate::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MuyGpsError {
    #[error("nn_count {k} must be in 1..={max} (n_train - 1)")]
    BadNnCount { k: usize, max: usize },
    #[error("batch index {index} out of range for {n_train} training rows")]
    BadBatchIndex { index: usize, n_train: usize },
    #[error("invalid optimizer bounds: lower {lo} must be positive and below upper {hi}")]
    BadBounds { lo: f64, hi: f64 },
    #[error("model file {path}: {message}")]
    ModelFile { path: String, message: String },
    #[error("query has {got} features but the model was trained on {expected}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Latent posterior at one test point for one signed-label problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentPrediction<F> {
    pub mean: F,
    pub variance: F,
    /// Sign decision on the latent; an exact zero counts as -1.
    pub label: i8,
}

impl<F: Scalar> LatentPrediction<F> {
    pub fn from_posterior(mean: F, variance: F) -> Self {
        LatentPrediction { mean, variance, label: if mean > F::zero() { 1 } else { -1 } }
    }
}

/// Class decision plus every per-class latent (one for binary problems).
#[derive(Debug, Clone)]
pub struct Prediction<F> {
    pub label: usize,
    pub latents: Vec<LatentPrediction<F>>,
}

/// Training options for the batched leave-one-out optimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub seed: u64,
    /// Length-scale search bounds (searched on a log grid).
    pub length_scale_bounds: (f64, f64),
    /// Also free the noise variance (coordinate-wise search).
    pub optimize_noise: bool,
    pub max_evals: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 500,
            seed: 42,
            length_scale_bounds: (1e-2, 1e2),
            optimize_noise: false,
            max_evals: 48,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub evaluations: usize,
    pub length_scale: f64,
    pub noise: f64,
    pub batch_size: usize,
    pub single_class_batch: bool,
}

/// A trained local-kriging classifier. Self-contained: owns the training
/// matrix (inside the NN index) and the per-class signed labels.
pub struct MuyGpsModel<F> {
    pub params: KernelParams<F>,
    pub nn_count: usize,
    index: NnIndex<F>,
    class_latents: Vec<SignedLabels>,
    class_names: Vec<String>,
}

/// Numerically stable softmax over (a, -a): p0 = 1 / (1 + e^(-2a)).
pub fn softmax_pair<F: Scalar>(a: F) -> (F, F) {
    let two = F::from_f64(2.0).unwrap();
    let e = (-(two * a.abs())).exp();
    let denom = F::one() + e;
    let (big, small) = (F::one() / denom, e / denom);
    if a >= F::zero() {
        (big, small)
    } else {
        (small, big)
    }
}

const PROB_CLAMP: f64 = 1e-12;

fn clamped_ln<F: Scalar>(p: F) -> F {
    let lo = F::from_f64(PROB_CLAMP).unwrap();
    let hi = F::one() - lo;
    let p = if p < lo {
        lo
    } else if p > hi {
        hi
    } else {
        p
    };
    p.ln()
}

/// Cross-entropy contribution of one point: weight (z+1)/2 on log p0.
fn ce_term<F: Scalar>(latent: F, z: i8) -> F {
    let (p0, p1) = softmax_pair(latent);
    if z > 0 {
        -clamped_ln(p0)
    } else {
        -clamped_ln(p1)
    }
}

/// Shared per-point solve: returns ((K_NN + eta^2 I)^-1 k_x, k_x) so the
/// caller can dot against any label vector and form the variance.
fn kriging_weights<F: Scalar>(
    index: &NnIndex<F>,
    neighbors: &NeighborSet<F>,
    params: &KernelParams<F>,
) -> Result<(Vec<F>, Vec<F>), MuyGpsError> {
    let k = neighbors.indices.len();
    let unit = params.with_sigma2(F::one());
    let eval = kernel::MaternEval::new(&unit)?;
    // Cholesky reads only the lower triangle, so that's all we fill.
    let assemble = || {
        let mut local = Matrix::zeros(k, k);
        let diag = F::one() + params.noise;
        for a in 0..k {
            local.set(a, a, diag);
            let ra = index.row(neighbors.indices[a]);
            for b in 0..a {
                let rb = index.row(neighbors.indices[b]);
                let mut sq = F::zero();
                for (x, y) in ra.iter().zip(rb) {
                    let d = *x - *y;
                    sq += d * d;
                }
                local.set(a, b, eval.eval(sq.sqrt()));
            }
        }
        local
    };
    let cross: Vec<F> = neighbors.distances.iter().map(|&d| eval.eval(d)).collect();
    // Factor in place, reusing the assembled buffer; the rare indefinite
    // case rebuilds and takes the jittered path.
    let factor = match cholesky_in_place(assemble()) {
        Ok(f) => f,
        Err(_) => cholesky_jittered(&assemble(), F::one())?.0,
    };
    let weights = factor.solve(&cross)?;
    Ok((weights, cross))
}

impl<F: Scalar> MuyGpsModel<F> {
    /// Builds an untrained model around existing data and parameters.
    pub fn new(
        train: &EcgDataset<F>,
        params: KernelParams<F>,
        nn_count: usize,
    ) -> Result<Self, MuyGpsError> {
        // nn_count == n_samples is legal for prediction (dense posterior);
        // leave-one-out training then fails naturally in the neighbor query.
        let max = train.n_samples();
        if nn_count == 0 || nn_count > max {
            return Err(MuyGpsError::BadNnCount { k: nn_count, max });
        }
        let index = NnIndex::build(train.features().to_vec(), train.n_features())?;
        let n_classes = train.n_classes();
        let class_latents: Vec<SignedLabels> = if n_classes == 2 {
            vec![SignedLabels::one_vs_rest(train.labels(), 0)]
        } else {
            (0..n_classes).map(|c| SignedLabels::one_vs_rest(train.labels(), c)).collect()
        };
        Ok(MuyGpsModel {
            params,
            nn_count,
            index,
            class_latents,
            class_names: train.class_names().to_vec(),
        })
    }

    pub fn n_train(&self) -> usize {
        self.index.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.index.n_features()
    }

    pub fn n_latents(&self) -> usize {
        self.class_latents.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn index(&self) -> &NnIndex<F> {
        &self.index
    }

    pub fn class_latent(&self, c: usize) -> &SignedLabels {
        &self.class_latents[c]
    }

    fn check_width(&self, x: &[F]) -> Result<(), MuyGpsError> {
        if x.len() != self.n_features() {
            return Err(MuyGpsError::FeatureMismatch { expected: self.n_features(), got: x.len() });
        }
        Ok(())
    }

    pub fn neighbors_of(
        &self,
        x: &[F],
        exclude_self: Option<usize>,
    ) -> Result<NeighborSet<F>, MuyGpsError> {
        self.check_width(x)?;
        Ok(self.index.query(x, self.nn_count, exclude_self)?)
    }

    /// Latent kriging mean for one label problem at one point.
    pub fn local_mean(
        &self,
        x: &[F],
        class: usize,
        exclude_self: Option<usize>,
    ) -> Result<F, MuyGpsError> {
        let neighbors = self.neighbors_of(x, exclude_self)?;
        let (weights, _) = kriging_weights(&self.index, &neighbors, &self.params)?;
        let z = &self.class_latents[class];
        Ok(neighbors
            .indices
            .iter()
            .zip(&weights)
            .map(|(&i, &w)| w * F::from_i8(z.get(i)).unwrap())
            .sum())
    }

    /// Sigma2-scaled local posterior variance at one point.
    pub fn local_variance(&self, x: &[F]) -> Result<F, MuyGpsError> {
        let neighbors = self.neighbors_of(x, None)?;
        let (weights, cross) = kriging_weights(&self.index, &neighbors, &self.params)?;
        let q: F = cross.iter().zip(&weights).map(|(&a, &b)| a * b).sum();
        let floor = F::from_f64(1e-12).unwrap();
        let var = self.params.sigma2 * (F::one() - q);
        Ok(if var < floor { floor } else { var })
    }

    /// Full prediction at one point given its neighborhood: every per-class
    /// latent plus the hard class decision.
    pub fn predict_point(&self, neighbors: &NeighborSet<F>) -> Result<Prediction<F>, MuyGpsError> {
        let (weights, cross) = kriging_weights(&self.index, neighbors, &self.params)?;
        let q: F = cross.iter().zip(&weights).map(|(&a, &b)| a * b).sum();
        let floor = F::from_f64(1e-12).unwrap();
        let var = self.params.sigma2 * (F::one() - q);
        let var = if var < floor { floor } else { var };
        let latents: Vec<LatentPrediction<F>> = self
            .class_latents
            .iter()
            .map(|z| {
                let mean: F = neighbors
                    .indices
                    .iter()
                    .zip(&weights)
                    .map(|(&i, &w)| w * F::from_i8(z.get(i)).unwrap())
                    .sum();
                LatentPrediction::from_posterior(mean, var)
            })
            .collect();
        let label = if self.class_latents.len() == 1 {
            // single latent: +1 is class 0 (normal), -1 is class 1
            if latents[0].label > 0 {
                0
            } else {
                1
            }
        } else {
            // one-vs-all: argmax of latent means, ties to the smallest class
            let mut best = 0usize;
            for c in 1..latents.len() {
                if latents[c].mean > latents[best].mean {
                    best = c;
                }
            }
            best
        };
        Ok(Prediction { label, latents })
    }

    /// Neighborhoods for many test points (parallel, no self exclusion).
    pub fn neighborhoods(&self, test: &[&[F]]) -> Result<Vec<NeighborSet<F>>, MuyGpsError> {
        for x in test {
            self.check_width(x)?;
        }
        Ok(self.index.batch_query(test, self.nn_count, None)?)
    }

    /// Local solves only, given precomputed neighborhoods. Split out from
    /// [`predict`](Self::predict) so the O(k^3) phase can be measured apart
    /// from the NN queries.
    pub fn predict_with_neighborhoods(
        &self,
        neighborhoods: &[NeighborSet<F>],
    ) -> Result<Vec<Prediction<F>>, MuyGpsError> {
        neighborhoods.par_iter().map(|ns| self.predict_point(ns)).collect()
    }

    pub fn predict(&self, test: &[&[F]]) -> Result<Vec<Prediction<F>>, MuyGpsError> {
        if test.is_empty() {
            return Ok(Vec::new());
        }
        let neighborhoods = self.neighborhoods(test)?;
        self.predict_with_neighborhoods(&neighborhoods)
    }

    /// Leave-one-out cross-entropy over a batch of training indices, summed
    /// over every class latent, at the model's current parameters.
    pub fn cross_entropy_loss(&self, batch: &[usize]) -> Result<F, MuyGpsError> {
        for &i in batch {
            if i >= self.n_train() {
                return Err(MuyGpsError::BadBatchIndex { index: i, n_train: self.n_train() });
            }
        }
        let neighborhoods: Vec<NeighborSet<F>> = batch
            .par_iter()
            .map(|&i| self.index.query(self.index.row(i), self.nn_count, Some(i)))
            .collect::<Result<_, _>>()?;
        batch_loss(&self.index, &self.class_latents, batch, &neighborhoods, &self.params)
    }
}

/// Loss for a fixed batch and fixed neighborhoods at arbitrary parameters.
/// Neighborhoods depend only on feature-space distances, never on the kernel,
/// so the optimizer reuses them across every evaluation.
fn batch_loss<F: Scalar>(
    index: &NnIndex<F>,
    class_latents: &[SignedLabels],
    batch: &[usize],
    neighborhoods: &[NeighborSet<F>],
    params: &KernelParams<F>,
) -> Result<F, MuyGpsError> {
    let terms: Result<Vec<F>, MuyGpsError> = batch
        .par_iter()
        .zip(neighborhoods.par_iter())
        .map(|(&i, ns)| {
            let (weights, _) = kriging_weights(index, ns, params)?;
            let mut total = F::zero();
            for z in class_latents {
                let mean: F = ns
                    .indices
                    .iter()
                    .zip(&weights)
                    .map(|(&j, &w)| w * F::from_i8(z.get(j)).unwrap())
                    .sum();
                total += ce_term(mean, z.get(i));
            }
            Ok(total)
        })
        .collect();
    Ok(terms?.into_iter().sum())
}

/// Golden-section minimization over log10 of a positive parameter.
/// Returns (argmin, min, evaluations). The objective cache includes the
/// endpoints, so the reported minimum never exceeds any evaluated value.
fn golden_section<F: Scalar>(
    lo: f64,
    hi: f64,
    budget: usize,
    mut f: impl FnMut(f64) -> Result<F, MuyGpsError>,
) -> Result<(f64, F, usize), MuyGpsError> {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.log10(), hi.log10());
    let mut evals = 0usize;
    let mut best = (lo, f(lo)?);
    evals += 1;
    let fb_hi = f(hi)?;
    evals += 1;
    if fb_hi < best.1 {
        best = (hi, fb_hi);
    }
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(10f64.powf(c))?;
    let mut fd = f(10f64.powf(d))?;
    evals += 2;
    while evals < budget && (b - a) > 1e-3 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(10f64.powf(c))?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(10f64.powf(d))?;
        }
        evals += 1;
    }
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx < best.1 {
            best = (10f64.powf(x), fx);
        }
    }
    Ok((best.0, best.1, evals))
}

/// Trains length scale (and optionally noise) by minimizing the batched
/// leave-one-out cross-entropy, then returns the fitted model.
pub fn optimize<F: Scalar>(
    train: &EcgDataset<F>,
    cfg: &TrainConfig,
    init: KernelParams<F>,
    nn_count: usize,
) -> Result<(MuyGpsModel<F>, TrainingSummary), MuyGpsError> {
    let (lo, hi) = cfg.length_scale_bounds;
    if !(lo > 0.0 && lo < hi) {
        return Err(MuyGpsError::BadBounds { lo, hi });
    }
    let mut model = MuyGpsModel::new(train, init, nn_count)?;
    let batch = sample_batch(train.n_samples(), cfg.batch_size.min(train.n_samples()), cfg.seed)?;
    let single_class_batch = {
        let first = train.labels()[batch[0]];
        batch.iter().all(|&i| train.labels()[i] == first)
    };
    if single_class_batch {
        eprintln!("warning: training batch contains a single class; loss is still defined but weakly informative");
    }
    let neighborhoods: Vec<NeighborSet<F>> = batch
        .par_iter()
        .map(|&i| model.index.query(model.index.row(i), nn_count, Some(i)))
        .collect::<Result<_, _>>()?;

    let initial_loss =
        batch_loss(&model.index, &model.class_latents, &batch, &neighborhoods, &init)?;
    let mut evals = 1usize;

    let mut params = init;
    let budget = cfg.max_evals.max(8);
    let (l_best, mut loss_best, used) = golden_section(lo, hi, budget, |l| {
        let p = params.with_length_scale(F::from_f64(l).unwrap());
        batch_loss(&model.index, &model.class_latents, &batch, &neighborhoods, &p)
    })?;
    evals += used;
    params.length_scale = F::from_f64(l_best).unwrap();

    if cfg.optimize_noise {
        let (n_best, n_loss, used) = golden_section(1e-8, 1e-1, budget, |eta2| {
            let mut p = params;
            p.noise = F::from_f64(eta2).unwrap();
            batch_loss(&model.index, &model.class_latents, &batch, &neighborhoods, &p)
        })?;
        evals += used;
        if n_loss < loss_best {
            params.noise = F::from_f64(n_best).unwrap();
            loss_best = n_loss;
        }
    }

    // never regress below the initial configuration
    let final_loss = if initial_loss < loss_best {
        params = init;
        initial_loss
    } else {
        loss_best
    };
    model.params = params;
    Ok((
        model,
        TrainingSummary {
            initial_loss: initial_loss.to_f64().unwrap(),
            final_loss: final_loss.to_f64().unwrap(),
            evaluations: evals,
            length_scale: params.length_scale.to_f64().unwrap(),
            noise: params.noise.to_f64().unwrap(),
            batch_size: batch.len(),
            single_class_batch,
        },
    ))
}

/// On-disk model container. JSON with full-precision floats; serde's f64
/// round-trip is exact, so save/load is bit-faithful.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kernel: KernelParams<f64>,
    nn_count: usize,
    n_train: usize,
    n_features: usize,
    class_names: Vec<String>,
    class_latents: Vec<Vec<i8>>,
    features: Vec<f64>,
}

impl MuyGpsModel<f64> {
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), MuyGpsError> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kernel: self.params,
            nn_count: self.nn_count,
            n_train: self.n_train(),
            n_features: self.n_features(),
            class_names: self.class_names.clone(),
            class_latents: self.class_latents.iter().map(|z| z.values().to_vec()).collect(),
            features: self.index.rows().flatten().copied().collect(),
        };
        let json = serde_json::to_vec(&file).expect("model serialization");
        std::fs::write(path.as_ref(), json).map_err(|e| MuyGpsError::ModelFile {
            path: path.as_ref().display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, MuyGpsError> {
        let path_str = path.as_ref().display().to_string();
        let bytes = std::fs::read(path.as_ref())
            .map_err(|e| MuyGpsError::ModelFile { path: path_str.clone(), message: e.to_string() })?;
        let file: ModelFile = serde_json::from_slice(&bytes)
            .map_err(|e| MuyGpsError::ModelFile { path: path_str.clone(), message: e.to_string() })?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(MuyGpsError::ModelFile {
                path: path_str,
                message: format!("unsupported format version {}", file.format_version),
            });
        }
        let index = NnIndex::build(file.features, file.n_features)?;
        Ok(MuyGpsModel {
            params: file.kernel,
            nn_count: file.nn_count,
            index,
            class_latents: file.class_latents.into_iter().map(SignedLabels::new).collect(),
            class_names: file.class_names,
        })
    }
}
