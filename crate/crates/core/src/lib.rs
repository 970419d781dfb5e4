//! Nearest-neighbor-restricted Gaussian process classification for ECG
//! heartbeat data, with prediction-interval uncertainty quantification.
//!
//! The core pieces are:
//! - [`kernel`]: isotropic Matérn covariances with homoscedastic noise,
//! - [`nn_index`]: exact k-nearest-neighbor search over training features,
//! - [`gp_exact`]: the full GP classifier (reference and small-data baseline),
//! - [`local_gp`]: local-kriging GP prediction with batched leave-one-out
//!   cross-entropy hyperparameter training,
//! - [`uq`]: prediction intervals, ambiguity flagging and variance calibration,
//! - [`baseline_knn`]: a k-nearest-neighbor classifier baseline,
//! - [`data`]: CSV ingestion, truncation, stratified splitting and SMOTE,
//! - [`eval`]: accuracy metrics and tau-sweep uncertainty reports.
//!
//! All numerics are generic over the scalar type via [`Scalar`]; `f64` is the
//! default used by the CLI and the type aliases at the crate root.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub mod baseline_knn;
pub mod data;
pub mod eval;
pub mod gp_exact;
pub mod kernel;
pub mod linalg;
pub mod local_gp;
pub mod nn_index;
pub mod synthetic;
pub mod uq;

/// Floating-point scalar the numeric core is generic over.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + ToPrimitive + Sum + Send + Sync + fmt::Debug + fmt::Display + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Send
        + Sync
        + fmt::Debug
        + fmt::Display
        + 'static
{
}

/// Default-precision dataset used by the CLI.
pub type EcgDataset = data::EcgDataset<f64>;
pub type KernelParams = kernel::KernelParams<f64>;
pub type MuyGpsModel = local_gp::MuyGpsModel<f64>;
pub type NnIndex = nn_index::NnIndex<f64>;
pub type KnnModel = baseline_knn::KnnModel<f64>;
