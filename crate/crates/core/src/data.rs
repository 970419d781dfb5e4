//! Dataset ingestion and preparation: CSV loading, feature truncation,
//! stratified splitting, batch sampling and SMOTE oversampling.
//!
//! The CSV layout is one sample per line, comma-separated, label in the last
//! column, with an optional header (detected by a non-numeric first row).

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn_index::NnIndex;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error at row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("row {row}: expected {expected} columns, got {got}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("row {row}: non-numeric cell '{cell}'")]
    NonNumericCell { row: usize, cell: String },
    #[error("row {row}: label {label} is not a valid class id")]
    BadLabel { row: usize, label: f64 },
    #[error("no samples in input")]
    NoSamples,
    #[error("truncation width {width} out of range (1..={max})")]
    BadTruncateWidth { width: usize, max: usize },
    #[error("class {class} has only {count} samples; at least 2 required for splitting")]
    ClassTooSmall { class: usize, count: usize },
    #[error("minority class has {count} samples; SMOTE needs more than k_neighbors={k}")]
    MinorityTooSmall { count: usize, k: usize },
    #[error("invalid SMOTE config: {0}")]
    BadSmoteConfig(String),
    #[error("batch size {batch} out of range 1..={n_train}")]
    BadBatchSize { batch: usize, n_train: usize },
}

/// Feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgDataset<F> {
    features: Vec<F>,
    n_samples: usize,
    n_features: usize,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl<F: Scalar> EcgDataset<F> {
    pub fn new(
        features: Vec<F>,
        n_features: usize,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Self {
        assert!(n_features > 0);
        assert_eq!(features.len() % n_features, 0);
        let n_samples = features.len() / n_features;
        assert_eq!(labels.len(), n_samples);
        assert!(n_samples > 0);
        assert!(labels.iter().all(|&l| l < class_names.len()));
        EcgDataset { features, n_samples, n_features, labels, class_names }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        (0..self.n_samples).map(move |i| self.row(i))
    }

    pub fn features(&self) -> &[F] {
        &self.features
    }

    /// Per-class sample counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.n_classes()];
        for &l in &self.labels {
            hist[l] += 1;
        }
        hist
    }

    /// New dataset keeping only the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> EcgDataset<F> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        EcgDataset::new(features, self.n_features, labels, self.class_names.clone())
    }
}

/// Per-sample labels in {+1, -1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedLabels {
    values: Vec<i8>,
}

impl SignedLabels {
    pub fn new(values: Vec<i8>) -> Self {
        assert!(values.iter().all(|&v| v == 1 || v == -1));
        SignedLabels { values }
    }

    /// +1 where the class label equals `positive_class`, -1 elsewhere.
    pub fn one_vs_rest(labels: &[usize], positive_class: usize) -> Self {
        SignedLabels {
            values: labels.iter().map(|&l| if l == positive_class { 1 } else { -1 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        self.values[i]
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn as_scalars<F: Scalar>(&self) -> Vec<F> {
        self.values.iter().map(|&v| F::from_i8(v).unwrap()).collect()
    }
}

pub fn default_class_names(n_classes: usize) -> Vec<String> {
    match n_classes {
        2 => vec!["Normal".into(), "Abnormal".into()],
        5 => vec!["N".into(), "S".into(), "V".into(), "F".into(), "Q".into()],
        n => (0..n).map(|i| format!("class_{i}")).collect(),
    }
}

/// Loads a CSV of feature rows with the class label in the last column.
pub fn load_csv<F: Scalar, P: AsRef<Path>>(path: P) -> Result<EcgDataset<F>, DataError> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path_str.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => DataError::Csv { row: 0, message: e.to_string() },
        })?;

    let mut features: Vec<F> = Vec::new();
    let mut raw_labels: Vec<f64> = Vec::new();
    let mut n_features = 0usize;
    let mut first_data_row = true;
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| DataError::Csv { row, message: e.to_string() })?;
        if record.len() == 0 || (record.len() == 1 && record[0].trim().is_empty()) {
            continue;
        }
        // Header auto-detection: a non-numeric first row is skipped.
        if first_data_row && record.iter().any(|c| c.trim().parse::<f64>().is_err()) {
            continue; // width comes from the first data row, not the header
        }
        if first_data_row {
            if record.len() < 2 {
                return Err(DataError::RaggedRow { row, expected: 2, got: record.len() });
            }
            n_features = record.len() - 1;
            first_data_row = false;
        } else if record.len() != n_features + 1 {
            return Err(DataError::RaggedRow { row, expected: n_features + 1, got: record.len() });
        }
        for cell in record.iter().take(n_features) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| DataError::NonNumericCell { row, cell: cell.to_string() })?;
            features.push(F::from_f64(v).unwrap());
        }
        let label_cell = &record[n_features];
        let label: f64 = label_cell
            .trim()
            .parse()
            .map_err(|_| DataError::NonNumericCell { row, cell: label_cell.to_string() })?;
        if label.fract() != 0.0 || label < 0.0 || label > u32::MAX as f64 {
            return Err(DataError::BadLabel { row, label });
        }
        raw_labels.push(label);
    }
    if raw_labels.is_empty() {
        return Err(DataError::NoSamples);
    }
    let n_classes = raw_labels.iter().fold(0usize, |m, &l| m.max(l as usize + 1));
    let labels: Vec<usize> = raw_labels.into_iter().map(|l| l as usize).collect();
    Ok(EcgDataset::new(features, n_features, labels, default_class_names(n_classes)))
}

/// Writes a dataset back in the input layout (no header).
pub fn write_csv<F: Scalar, P: AsRef<Path>>(ds: &EcgDataset<F>, path: P) -> Result<(), DataError> {
    let path_str = path.as_ref().display().to_string();
    let mut writer = csv::Writer::from_path(path.as_ref())
        .map_err(|e| DataError::Io { path: path_str.clone(), source: std::io::Error::other(e.to_string()) })?;
    for i in 0..ds.n_samples() {
        let mut record: Vec<String> =
            ds.row(i).iter().map(|v| format!("{}", v)).collect();
        record.push(ds.labels()[i].to_string());
        writer
            .write_record(&record)
            .map_err(|e| DataError::Csv { row: i + 1, message: e.to_string() })?;
    }
    writer
        .flush()
        .map_err(|e| DataError::Io { path: path_str, source: e })?;
    Ok(())
}

/// Keeps only the first `width` feature columns.
pub fn truncate<F: Scalar>(ds: &EcgDataset<F>, width: usize) -> Result<EcgDataset<F>, DataError> {
    if width == 0 || width > ds.n_features() {
        return Err(DataError::BadTruncateWidth { width, max: ds.n_features() });
    }
    if width == ds.n_features() {
        return Ok(ds.clone());
    }
    let mut features = Vec::with_capacity(ds.n_samples() * width);
    for i in 0..ds.n_samples() {
        features.extend_from_slice(&ds.row(i)[..width]);
    }
    Ok(EcgDataset::new(features, width, ds.labels().to_vec(), ds.class_names().to_vec()))
}

/// Deterministic stratified split into (train, test).
pub fn stratified_split<F: Scalar>(
    ds: &EcgDataset<F>,
    test_fraction: f64,
    seed: u64,
) -> Result<(EcgDataset<F>, EcgDataset<F>), DataError> {
    assert!(test_fraction > 0.0 && test_fraction < 1.0);
    let hist = ds.class_histogram();
    for (class, &count) in hist.iter().enumerate() {
        if count > 0 && count < 2 {
            return Err(DataError::ClassTooSmall { class, count });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..ds.n_classes() {
        let mut members: Vec<usize> =
            (0..ds.n_samples()).filter(|&i| ds.labels()[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let n_test = ((members.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.clamp(1, members.len() - 1);
        test_idx.extend_from_slice(&members[..n_test]);
        train_idx.extend_from_slice(&members[n_test..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((ds.select(&train_idx), ds.select(&test_idx)))
}

/// SMOTE settings: neighbor count, target minority/majority ratio, RNG seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    pub ratio: f64,
    pub seed: u64,
}

/// Where a synthetic sample came from: s = row(source) + r * (row(neighbor) - row(source)).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoteRecord {
    pub source: usize,
    pub neighbor: usize,
    pub r: f64,
    pub class: usize,
}

/// Appends synthetic samples until every minority class reaches
/// `ratio * majority_count`. Original rows are untouched and stay first.
pub fn smote_oversample<F: Scalar>(
    ds: &EcgDataset<F>,
    cfg: &SmoteConfig,
) -> Result<(EcgDataset<F>, Vec<SmoteRecord>), DataError> {
    if cfg.k_neighbors == 0 {
        return Err(DataError::BadSmoteConfig("k_neighbors must be >= 1".into()));
    }
    if !(cfg.ratio > 0.0 && cfg.ratio <= 1.0) {
        return Err(DataError::BadSmoteConfig(format!("ratio {} not in (0,1]", cfg.ratio)));
    }
    let hist = ds.class_histogram();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(DataError::BadSmoteConfig("need at least 2 classes".into()));
    }
    let majority = *hist.iter().max().unwrap();
    let target = (cfg.ratio * majority as f64).ceil() as usize;

    let mut features = ds.features().to_vec();
    let mut labels = ds.labels().to_vec();
    let mut records = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for class in 0..ds.n_classes() {
        let count = hist[class];
        if count == 0 || count == majority || count >= target {
            continue;
        }
        if count <= cfg.k_neighbors {
            return Err(DataError::MinorityTooSmall { count, k: cfg.k_neighbors });
        }
        let members: Vec<usize> =
            (0..ds.n_samples()).filter(|&i| ds.labels()[i] == class).collect();
        let class_rows: Vec<F> =
            members.iter().flat_map(|&i| ds.row(i).iter().copied()).collect();
        let index = NnIndex::build(class_rows, ds.n_features()).expect("non-empty class");
        // Neighbor lists are fixed per source point; precompute lazily.
        let mut neighbor_cache: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for _ in 0..target - count {
            let local_src = rng.gen_range(0..members.len());
            let neighbors = neighbor_cache.entry(local_src).or_insert_with(|| {
                index
                    .query(ds.row(members[local_src]), cfg.k_neighbors, Some(local_src))
                    .expect("k < class size")
                    .indices
            });
            let local_nb = neighbors[rng.gen_range(0..neighbors.len())];
            let r: f64 = rng.gen_range(0.0..=1.0);
            let rf = F::from_f64(r).unwrap();
            let src = ds.row(members[local_src]);
            let nb = ds.row(members[local_nb]);
            for j in 0..ds.n_features() {
                features.push(src[j] + rf * (nb[j] - src[j]));
            }
            labels.push(class);
            records.push(SmoteRecord {
                source: members[local_src],
                neighbor: members[local_nb],
                r,
                class,
            });
        }
    }
    Ok((
        EcgDataset::new(features, ds.n_features(), labels, ds.class_names().to_vec()),
        records,
    ))
}

/// Uniformly samples `batch_size` distinct training indices.
pub fn sample_batch(n_train: usize, batch_size: usize, seed: u64) -> Result<Vec<usize>, DataError> {
    if batch_size == 0 || batch_size > n_train {
        return Err(DataError::BadBatchSize { batch: batch_size, n_train });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n_train, batch_size).into_vec())
}
