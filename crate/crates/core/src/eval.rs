//! Accuracy metrics, tau-sweep uncertainty reports and their JSON/CSV
//! serializations.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::local_gp::Prediction;
use crate::uq::{prediction_ambiguous, TauGrid};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty inputs")]
    Empty,
    #[error("i/o error writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Fraction of exact label matches.
pub fn accuracy(preds: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch { left: preds.len(), right: truth.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = preds.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// One tau level of a sweep: ambiguity counts, accuracies, and the confusion
/// matrix (true class by predicted class) over the non-ambiguous points.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TauRow {
    pub tau: f64,
    pub confidence: f64,
    pub n_ambiguous: usize,
    pub n_total: usize,
    pub accuracy_all: f64,
    /// None when every point is ambiguous at this tau.
    pub accuracy_non_ambiguous: Option<f64>,
    pub confusion_non_ambiguous: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ReportProvenance {
    pub model_path: Option<String>,
    pub model_hash: Option<String>,
    pub dataset_path: Option<String>,
    pub seed: Option<u64>,
    pub sigma2: Option<f64>,
    /// Set when any posterior variance hit the numeric floor; interval
    /// widths at those points assume Gaussianity that was not observed.
    pub variance_floor_triggered: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UqReport {
    pub n_classes: usize,
    pub rows: Vec<TauRow>,
    pub provenance: ReportProvenance,
}

impl UqReport {
    /// Checks the structural invariants every report must satisfy.
    pub fn validate(&self) -> bool {
        let mono = self.rows.windows(2).all(|w| {
            w[0].tau < w[1].tau && w[0].n_ambiguous <= w[1].n_ambiguous
        });
        let acc = self.rows.iter().all(|r| {
            (0.0..=1.0).contains(&r.accuracy_all)
                && r.accuracy_non_ambiguous.map_or(true, |a| (0.0..=1.0).contains(&a))
                && r.confusion_non_ambiguous.iter().flatten().sum::<usize>()
                    == r.n_total - r.n_ambiguous
        });
        mono && acc
    }
}

/// Partitions predictions by ambiguity at each tau and scores the
/// non-ambiguous subset. Multi-latent predictions use union semantics.
pub fn tau_sweep<F: Scalar>(
    preds: &[Prediction<F>],
    truth: &[usize],
    grid: &TauGrid,
    n_classes: usize,
) -> Result<UqReport, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch { left: preds.len(), right: truth.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
    let accuracy_all = accuracy(&labels, truth)?;
    let mut rows = Vec::with_capacity(grid.taus.len());
    for (&tau, &confidence) in grid.taus.iter().zip(&grid.confidences) {
        let tau_f = F::from_f64(tau).unwrap();
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        let mut n_ambiguous = 0usize;
        let mut hits = 0usize;
        for (p, &t) in preds.iter().zip(truth) {
            if prediction_ambiguous(p, tau_f) {
                n_ambiguous += 1;
            } else {
                confusion[t][p.label] += 1;
                if p.label == t {
                    hits += 1;
                }
            }
        }
        let survivors = preds.len() - n_ambiguous;
        rows.push(TauRow {
            tau,
            confidence,
            n_ambiguous,
            n_total: preds.len(),
            accuracy_all,
            accuracy_non_ambiguous: (survivors > 0).then(|| hits as f64 / survivors as f64),
            confusion_non_ambiguous: confusion,
        });
    }
    Ok(UqReport { n_classes, rows, provenance: ReportProvenance::default() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Writes the report: JSON carries the full nested structure, CSV one row
/// per tau with the plottable columns.
pub fn emit_report<P: AsRef<Path>>(
    report: &UqReport,
    path: P,
    format: ReportFormat,
) -> Result<(), EvalError> {
    let path_str = path.as_ref().display().to_string();
    let io_err = |source: std::io::Error| EvalError::Io { path: path_str.clone(), source };
    match format {
        ReportFormat::Json => {
            let json = serde_json::to_vec_pretty(report).expect("report serialization");
            std::fs::write(path.as_ref(), json).map_err(io_err)
        }
        ReportFormat::Csv => {
            let mut out = String::from(
                "tau,confidence,n_ambiguous,n_total,accuracy_all,accuracy_non_ambiguous\n",
            );
            for r in &report.rows {
                let non_amb =
                    r.accuracy_non_ambiguous.map_or(String::new(), |a| format!("{a}"));
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.tau, r.confidence, r.n_ambiguous, r.n_total, r.accuracy_all, non_amb
                ));
            }
            std::fs::write(path.as_ref(), out).map_err(io_err)
        }
    }
}

pub fn load_report<P: AsRef<Path>>(path: P) -> Result<UqReport, EvalError> {
    let path_str = path.as_ref().display().to_string();
    let bytes = std::fs::read(path.as_ref())
        .map_err(|source| EvalError::Io { path: path_str.clone(), source })?;
    serde_json::from_slice(&bytes).map_err(|e| EvalError::Io {
        path: path_str,
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_gp::LatentPrediction;

    fn pred(mean: f64, variance: f64) -> Prediction<f64> {
        let latent = LatentPrediction::from_posterior(mean, variance);
        Prediction { label: if mean > 0.0 { 0 } else { 1 }, latents: vec![latent] }
    }

    #[test]
    fn accuracy_counting() {
        assert_eq!(accuracy(&[1, 1, 0, 0], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 0, 0], &[1, 0, 0, 1]).unwrap(), 0.5);
        assert!(accuracy(&[1], &[1, 2]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn sweep_hand_enumerated() {
        // 6 points with hand-chosen means/variances at tau = 1.0 and 2.0:
        //   p0 mean  1.0 sd 0.1  -> never ambiguous, correct (truth 0)
        //   p1 mean -1.0 sd 0.1  -> never ambiguous, correct (truth 1)
        //   p2 mean  0.5 sd 0.4  -> ambiguous at tau=2 only, correct (truth 0)
        //   p3 mean -0.5 sd 0.4  -> ambiguous at tau=2 only, wrong (truth 0)
        //   p4 mean  0.1 sd 0.4  -> ambiguous at both, correct (truth 0)
        //   p5 mean  2.0 sd 0.1  -> never ambiguous, wrong (truth 1)
        let preds = vec![
            pred(1.0, 0.01),
            pred(-1.0, 0.01),
            pred(0.5, 0.16),
            pred(-0.5, 0.16),
            pred(0.1, 0.16),
            pred(2.0, 0.01),
        ];
        let truth = vec![0, 1, 0, 0, 0, 1];
        let grid = TauGrid { taus: vec![1.0, 2.0], confidences: vec![0.68, 0.95] };
        let report = tau_sweep(&preds, &truth, &grid, 2).unwrap();
        assert!(report.validate());

        let r1 = &report.rows[0];
        assert_eq!(r1.n_ambiguous, 1);
        // survivors: p0 ok, p1 ok, p2 ok, p3 wrong, p5 wrong -> 3/5
        assert_eq!(r1.accuracy_non_ambiguous, Some(3.0 / 5.0));
        assert_eq!(r1.accuracy_all, 4.0 / 6.0);
        assert_eq!(r1.confusion_non_ambiguous[0][0], 2); // p0, p2
        assert_eq!(r1.confusion_non_ambiguous[0][1], 1); // p3
        assert_eq!(r1.confusion_non_ambiguous[1][0], 1); // p5
        assert_eq!(r1.confusion_non_ambiguous[1][1], 1); // p1

        let r2 = &report.rows[1];
        assert_eq!(r2.n_ambiguous, 3);
        assert_eq!(r2.accuracy_non_ambiguous, Some(2.0 / 3.0));
        assert_eq!(r2.accuracy_all, r1.accuracy_all);
    }

    #[test]
    fn sweep_all_ambiguous_reports_null() {
        let preds = vec![pred(0.0, 1.0), pred(0.0, 1.0)];
        let report = tau_sweep(&preds, &[0, 1], &TauGrid::default(), 2).unwrap();
        for r in &report.rows {
            assert_eq!(r.n_ambiguous, 2);
            assert_eq!(r.accuracy_non_ambiguous, None);
        }
        assert!(report.validate());
    }

    #[test]
    fn sweep_zero_variance_counts_only_boundary_latents() {
        let preds = vec![pred(0.7, 1e-12), pred(-0.2, 1e-12)];
        let report = tau_sweep(&preds, &[0, 1], &TauGrid::default(), 2).unwrap();
        for r in &report.rows {
            assert_eq!(r.n_ambiguous, 0);
        }
    }

    #[test]
    fn report_round_trips_json_and_csv() {
        let preds = vec![pred(1.0, 0.01), pred(-0.1, 0.2), pred(0.3, 0.5)];
        let truth = vec![0, 1, 1];
        let mut report = tau_sweep(&preds, &truth, &TauGrid::default(), 2).unwrap();
        report.provenance.seed = Some(42);
        report.provenance.dataset_path = Some("toy.csv".into());

        let dir = tempfile::tempdir().unwrap();
        let json_path = dir.path().join("r.json");
        emit_report(&report, &json_path, ReportFormat::Json).unwrap();
        let loaded = load_report(&json_path).unwrap();
        assert_eq!(loaded, report);

        let csv_path = dir.path().join("r.csv");
        emit_report(&report, &csv_path, ReportFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let lines: Vec<&str> = text.trim_end().lines().collect();
        assert_eq!(lines.len(), report.rows.len() + 1);
        for (line, row) in lines[1..].iter().zip(&report.rows) {
            let cells: Vec<&str> = line.split(',').collect();
            assert!((cells[0].parse::<f64>().unwrap() - row.tau).abs() < 1e-9);
            assert_eq!(cells[2].parse::<usize>().unwrap(), row.n_ambiguous);
            if let Some(a) = row.accuracy_non_ambiguous {
                assert!((cells[5].parse::<f64>().unwrap() - a).abs() < 1e-9);
            } else {
                assert!(cells[5].is_empty());
            }
        }
    }
}
