//! Command-line front end: train/predict/uq-report/smote/split/evaluate/
//! baseline-knn over the CSV formats defined in the library. All randomness
//! derives from a single --seed; identical flags and seeds give byte-identical
//! output files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use muygps::data::{
    self, load_csv, smote_oversample, stratified_split, truncate, write_csv, SmoteConfig,
};
use muygps::gp_exact;
use muygps::kernel::KernelParams;
use muygps::local_gp::{optimize, MuyGpsModel, Prediction, TrainConfig};
use muygps::uq::{calibrate_sigma2, default_scale_grid, mean_unit_variance, TauGrid};
use muygps::{baseline_knn, eval, EcgDataset};

// Fixed offsets from the master seed, one per consumer of randomness.
const SEED_BATCH: u64 = 1;
const SEED_SPLIT: u64 = 2;
const SEED_SMOTE: u64 = 3;
const SEED_KNN: u64 = 4;

const EXIT_MISSING_FILE: u8 = 2;

#[derive(Parser)]
#[command(name = "muygps", version, about = "Nearest-neighbor GP classification with uncertainty quantification")]
struct Cli {
    /// Worker threads (fallback: MUYGPS_THREADS env var, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file of option defaults; explicit flags win on conflict
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Muygps,
    Gp,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a labeled CSV and write a self-contained model file
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Keep only the first N features (applied when rows are wider)
        #[arg(long)]
        truncate: Option<usize>,
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        /// Neighborhood size
        #[arg(long)]
        nn: Option<usize>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        length_scale: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_evals: Option<usize>,
        /// Also search the noise variance
        #[arg(long)]
        optimize_noise: bool,
        /// Skip hyperparameter search; use the given kernel as-is
        #[arg(long)]
        no_optimize: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict a test CSV with a saved model; writes a predictions CSV
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        truncate: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate sigma2, sweep the tau grid, and write a UQ report
    UqReport {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Labeled test CSV the report is computed on
        #[arg(long)]
        data: Option<PathBuf>,
        /// Labeled holdout CSV for variance calibration (skipped if absent)
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        truncate: Option<usize>,
        /// Tau level the calibration objective is evaluated at
        #[arg(long)]
        calibrate_tau: Option<f64>,
        /// Comma-separated tau overrides for the sweep grid
        #[arg(long)]
        taus: Option<String>,
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Oversample minority classes and write the augmented CSV
    Smote {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Target minority/majority ratio in (0, 1]
        #[arg(long)]
        ratio: Option<f64>,
        /// Minority neighbors interpolated against
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stratified train/test split of a labeled CSV
    Split {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_train: Option<PathBuf>,
        #[arg(long)]
        out_test: Option<PathBuf>,
    },
    /// Score a predictions CSV against the labels of a dataset CSV
    Evaluate {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-nearest-neighbor baseline: fit on train, score on test
    BaselineKnn {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        truncate: Option<usize>,
        /// Bootstrap repetitions for probability mean/variance (>= 2 enables)
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Predictions CSV path
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn new(message: impl Into<String>) -> Self {
        CliError { message: message.into(), code: 1 }
    }

    fn missing(path: &Path) -> Self {
        CliError {
            message: format!("missing input file: {}", path.display()),
            code: EXIT_MISSING_FILE,
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::new(e.to_string())
    }
}

/// Option resolution order: explicit flag, then --config JSON, then default.
struct Config(Value);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let value = match path {
            None => Value::Null,
            Some(p) => {
                if !p.exists() {
                    return Err(CliError::missing(p));
                }
                serde_json::from_slice(&std::fs::read(p)?)?
            }
        };
        Ok(Config(value))
    }

    fn get<T: serde::de::DeserializeOwned>(&self, key: &str) -> Option<T> {
        self.0.get(key).cloned().and_then(|v| serde_json::from_value(v).ok())
    }

    fn resolve<T: serde::de::DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> T {
        flag.or_else(|| self.get(key)).unwrap_or(default)
    }

    fn require<T: serde::de::DeserializeOwned>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<T, CliError> {
        flag.or_else(|| self.get(key))
            .ok_or_else(|| CliError::new(format!("missing required option --{key}")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = flag.or_else(|| {
        std::env::var("MUYGPS_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Train {
            data,
            truncate,
            model,
            nn,
            nu,
            length_scale,
            noise,
            sigma2,
            batch_size,
            max_evals,
            optimize_noise,
            no_optimize,
            seed,
            out,
        } => cmd_train(
            &cfg,
            TrainArgs {
                data,
                truncate,
                model,
                nn,
                nu,
                length_scale,
                noise,
                sigma2,
                batch_size,
                max_evals,
                optimize_noise,
                no_optimize,
                seed,
                out,
            },
        ),
        Command::Predict { model, data, truncate, out } => {
            cmd_predict(&cfg, model, data, truncate, out)
        }
        Command::UqReport {
            model,
            data,
            calibration,
            truncate,
            calibrate_tau,
            taus,
            out_json,
            out_csv,
        } => cmd_uq_report(&cfg, model, data, calibration, truncate, calibrate_tau, taus, out_json, out_csv),
        Command::Smote { data, ratio, k, seed, out } => cmd_smote(&cfg, data, ratio, k, seed, out),
        Command::Split { data, test_fraction, seed, out_train, out_test } => {
            cmd_split(&cfg, data, test_fraction, seed, out_train, out_test)
        }
        Command::Evaluate { pred, data, out } => cmd_evaluate(&cfg, pred, data, out),
        Command::BaselineKnn { train, test, k, truncate, runs, seed, out } => {
            cmd_baseline_knn(&cfg, train, test, k, truncate, runs, seed, out)
        }
    }
}

fn load_dataset(path: &Path, width: usize) -> Result<EcgDataset, CliError> {
    if !path.exists() {
        return Err(CliError::missing(path));
    }
    let ds = load_csv::<f64, _>(path)?;
    if width > 0 && ds.n_features() > width {
        Ok(truncate(&ds, width)?)
    } else {
        Ok(ds)
    }
}

fn kernel_from_flags(
    cfg: &Config,
    nu: Option<f64>,
    length_scale: Option<f64>,
    noise: Option<f64>,
    sigma2: Option<f64>,
) -> KernelParams<f64> {
    let d = KernelParams::<f64>::default();
    KernelParams {
        nu: cfg.resolve(nu, "nu", d.nu),
        length_scale: cfg.resolve(length_scale, "length_scale", d.length_scale),
        noise: cfg.resolve(noise, "noise", d.noise),
        sigma2: cfg.resolve(sigma2, "sigma2", d.sigma2),
    }
}

struct TrainArgs {
    data: Option<PathBuf>,
    truncate: Option<usize>,
    model: Option<ModelKind>,
    nn: Option<usize>,
    nu: Option<f64>,
    length_scale: Option<f64>,
    noise: Option<f64>,
    sigma2: Option<f64>,
    batch_size: Option<usize>,
    max_evals: Option<usize>,
    optimize_noise: bool,
    no_optimize: bool,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

/// Exact-GP model file: the data plus kernel; the factorization is cheap and
/// deterministic, so predict-time refits reproduce the training fit exactly.
#[derive(Serialize, serde::Deserialize)]
struct GpModelFile {
    model_kind: String,
    format_version: u32,
    kernel: KernelParams<f64>,
    n_train: usize,
    n_features: usize,
    class_names: Vec<String>,
    labels: Vec<usize>,
    features: Vec<f64>,
}

fn cmd_train(cfg: &Config, a: TrainArgs) -> Result<(), CliError> {
    let data = cfg.require(a.data, "data")?;
    let out = cfg.require(a.out, "out")?;
    let width = cfg.resolve(a.truncate, "truncate", 80usize);
    let seed = cfg.resolve(a.seed, "seed", 42u64);
    let kind = a.model.unwrap_or(ModelKind::Muygps);
    let params = kernel_from_flags(cfg, a.nu, a.length_scale, a.noise, a.sigma2);
    let ds = load_dataset(&data, width)?;

    match kind {
        ModelKind::Muygps => {
            let nn = cfg.resolve(a.nn, "nn", 50usize);
            let started = std::time::Instant::now();
            let (model, summary) = if a.no_optimize {
                let model = MuyGpsModel::new(&ds, params, nn)?;
                (model, None)
            } else {
                let tc = TrainConfig {
                    batch_size: cfg.resolve(a.batch_size, "batch_size", 500).min(ds.n_samples()),
                    seed: seed.wrapping_add(SEED_BATCH),
                    optimize_noise: a.optimize_noise,
                    max_evals: cfg.resolve(a.max_evals, "max_evals", 48),
                    ..Default::default()
                };
                let (model, summary) = optimize(&ds, &tc, params, nn)?;
                (model, Some(summary))
            };
            model.save(&out)?;
            let report = serde_json::json!({
                "model": "muygps",
                "out": out.display().to_string(),
                "n_train": ds.n_samples(),
                "n_features": ds.n_features(),
                "nn": nn,
                "kernel": model.params,
                "optimizer": summary,
                "elapsed_ms": started.elapsed().as_millis() as u64,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        ModelKind::Gp => {
            // validate the fit once up front so bad inputs fail at train time
            let rows: Vec<&[f64]> = ds.rows().collect();
            let z = data::SignedLabels::one_vs_rest(ds.labels(), 0);
            let _ = gp_exact::GpModel::fit(rows, &z, &params)?;
            let file = GpModelFile {
                model_kind: "gp".into(),
                format_version: 1,
                kernel: params,
                n_train: ds.n_samples(),
                n_features: ds.n_features(),
                class_names: ds.class_names().to_vec(),
                labels: ds.labels().to_vec(),
                features: ds.features().to_vec(),
            };
            std::fs::write(&out, serde_json::to_vec(&file)?)?;
            let report = serde_json::json!({
                "model": "gp",
                "out": out.display().to_string(),
                "n_train": ds.n_samples(),
                "n_features": ds.n_features(),
                "kernel": params,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

enum LoadedModel {
    Muygps(MuyGpsModel<f64>),
    Gp(GpModelFile),
}

impl LoadedModel {
    fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::missing(path));
        }
        let bytes = std::fs::read(path)?;
        let peek: Value = serde_json::from_slice(&bytes)?;
        if peek.get("model_kind").and_then(Value::as_str) == Some("gp") {
            Ok(LoadedModel::Gp(serde_json::from_slice(&bytes)?))
        } else {
            Ok(LoadedModel::Muygps(MuyGpsModel::load(path)?))
        }
    }

    fn n_features(&self) -> usize {
        match self {
            LoadedModel::Muygps(m) => m.n_features(),
            LoadedModel::Gp(f) => f.n_features,
        }
    }

    fn predict(&self, test: &[&[f64]]) -> Result<Vec<Prediction<f64>>, CliError> {
        match self {
            LoadedModel::Muygps(m) => Ok(m.predict(test)?),
            LoadedModel::Gp(f) => gp_predict(f, test),
        }
    }
}

/// One-vs-all exact-GP prediction mirroring the local model's label rules.
fn gp_predict(file: &GpModelFile, test: &[&[f64]]) -> Result<Vec<Prediction<f64>>, CliError> {
    let rows: Vec<&[f64]> = file.features.chunks(file.n_features).collect();
    let n_classes = file.class_names.len().max(2);
    let classes: Vec<usize> = if n_classes == 2 { vec![0] } else { (0..n_classes).collect() };
    let mut posteriors = Vec::with_capacity(classes.len());
    for &c in &classes {
        let z = data::SignedLabels::one_vs_rest(&file.labels, c);
        posteriors.push(gp_exact::gp_fit_predict(&rows, &z, test, &file.kernel)?);
    }
    let mut out = Vec::with_capacity(test.len());
    for i in 0..test.len() {
        let latents: Vec<muygps::local_gp::LatentPrediction<f64>> = posteriors
            .iter()
            .map(|p| muygps::local_gp::LatentPrediction::from_posterior(p.mean[i], p.variance[i]))
            .collect();
        let label = if latents.len() == 1 {
            usize::from(latents[0].label <= 0)
        } else {
            let mut best = 0;
            for c in 1..latents.len() {
                if latents[c].mean > latents[best].mean {
                    best = c;
                }
            }
            best
        };
        out.push(Prediction { label, latents });
    }
    Ok(out)
}

const PRED_HEADER: &str = "index,latent_mean,variance,predicted_label";

fn write_predictions(path: &Path, preds: &[Prediction<f64>]) -> Result<(), CliError> {
    let mut out = String::from(PRED_HEADER);
    out.push('\n');
    for (i, p) in preds.iter().enumerate() {
        // report the winning class's latent
        let l = &p.latents[if p.latents.len() == 1 { 0 } else { p.label }];
        out.push_str(&format!("{},{},{},{}\n", i, l.mean, l.variance, p.label));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_predict(
    cfg: &Config,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    width: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let model_path = cfg.require(model, "model")?;
    let data_path = cfg.require(data, "data")?;
    let out = cfg.require(out, "out")?;
    let model = LoadedModel::load(&model_path)?;
    let width = cfg.resolve(width, "truncate", model.n_features());
    let ds = match load_dataset(&data_path, width) {
        Ok(ds) => ds,
        // a file of zero data rows still gets a header-only predictions file
        Err(e) if e.message.contains("no samples") => {
            std::fs::write(&out, format!("{PRED_HEADER}\n"))?;
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let rows: Vec<&[f64]> = ds.rows().collect();
    let preds = model.predict(&rows)?;
    write_predictions(&out, &preds)
}

/// 2*Phi(tau) - 1 via the Abramowitz-Stegun erf approximation (|err| < 1.5e-7),
/// labeling user-supplied tau levels with their nominal confidence.
fn tau_confidence(tau: f64) -> f64 {
    let x = tau / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    (erf * 10_000.0).round() / 10_000.0
}

#[allow(clippy::too_many_arguments)]
fn cmd_uq_report(
    cfg: &Config,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    calibration: Option<PathBuf>,
    width: Option<usize>,
    calibrate_tau: Option<f64>,
    taus: Option<String>,
    out_json: Option<PathBuf>,
    out_csv: Option<PathBuf>,
) -> Result<(), CliError> {
    let model_path = cfg.require(model, "model")?;
    let data_path = cfg.require(data, "data")?;
    let out_json = cfg.require(out_json, "out_json")?;
    let mut model = match LoadedModel::load(&model_path)? {
        LoadedModel::Muygps(m) => m,
        LoadedModel::Gp(_) => {
            return Err(CliError::new("uq-report requires a muygps model file"));
        }
    };
    let width = cfg.resolve(width, "truncate", model.n_features());
    let ds = load_dataset(&data_path, width)?;

    let calibration = calibration.or_else(|| cfg.get("calibration"));
    let tau_cal = cfg.resolve(calibrate_tau, "calibrate_tau", 1.96);
    let mut calibration_out = None;
    if let Some(cal_path) = &calibration {
        let holdout = load_dataset(cal_path, width)?;
        let base = mean_unit_variance(&model, &holdout)?;
        let result = calibrate_sigma2(&model, &holdout, tau_cal, &default_scale_grid(base))?;
        model.params.sigma2 = result.sigma2;
        calibration_out = Some(result);
    }

    let grid = match taus.or_else(|| cfg.get("taus")) {
        None => TauGrid::default(),
        Some(list) => {
            let taus: Vec<f64> = list
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::new(format!("bad --taus: {e}")))?;
            let confidences = taus.iter().map(|&t| tau_confidence(t)).collect();
            TauGrid { taus, confidences }
        }
    };

    let rows: Vec<&[f64]> = ds.rows().collect();
    let preds = model.predict(&rows)?;
    let floor = 1e-12;
    let floor_hit =
        preds.iter().flat_map(|p| &p.latents).any(|l| l.variance <= floor * (1.0 + 1e-9));
    let mut report = eval::tau_sweep(&preds, ds.labels(), &grid, ds.n_classes())?;
    report.provenance = eval::ReportProvenance {
        model_path: Some(model_path.display().to_string()),
        model_hash: Some(fnv1a_hex(&std::fs::read(&model_path)?)),
        dataset_path: Some(data_path.display().to_string()),
        seed: None,
        sigma2: Some(model.params.sigma2),
        variance_floor_triggered: floor_hit,
    };
    eval::emit_report(&report, &out_json, eval::ReportFormat::Json)?;
    if let Some(csv_path) = out_csv.or_else(|| cfg.get("out_csv")) {
        eval::emit_report(&report, &csv_path, eval::ReportFormat::Csv)?;
    }
    if !report.validate() {
        return Err(CliError::new("emitted report failed schema validation"));
    }
    let summary = serde_json::json!({
        "out_json": out_json.display().to_string(),
        "n_test": ds.n_samples(),
        "sigma2": model.params.sigma2,
        "calibration": calibration_out,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn cmd_smote(
    cfg: &Config,
    data: Option<PathBuf>,
    ratio: Option<f64>,
    k: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let data_path = cfg.require(data, "data")?;
    let out = cfg.require(out, "out")?;
    let ratio = cfg.require(ratio, "ratio")?;
    let k = cfg.resolve(k, "k", 5usize);
    let seed = cfg.resolve(seed, "seed", 42u64);
    let ds = load_dataset(&data_path, 0)?;
    let smote_cfg = SmoteConfig { k_neighbors: k, ratio, seed: seed.wrapping_add(SEED_SMOTE) };
    let (augmented, records) = smote_oversample(&ds, &smote_cfg)?;
    write_csv(&augmented, &out)?;
    let hist = augmented.class_histogram();
    let majority = *hist.iter().max().unwrap();
    let minority = *hist.iter().filter(|&&c| c > 0).min().unwrap();
    let summary = serde_json::json!({
        "out": out.display().to_string(),
        "n_original": ds.n_samples(),
        "n_synthetic": records.len(),
        "class_histogram": hist,
        "achieved_ratio": minority as f64 / majority as f64,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_split(
    cfg: &Config,
    data: Option<PathBuf>,
    test_fraction: Option<f64>,
    seed: Option<u64>,
    out_train: Option<PathBuf>,
    out_test: Option<PathBuf>,
) -> Result<(), CliError> {
    let data_path = cfg.require(data, "data")?;
    let out_train = cfg.require(out_train, "out_train")?;
    let out_test = cfg.require(out_test, "out_test")?;
    let frac = cfg.resolve(test_fraction, "test_fraction", 0.2);
    if !(frac > 0.0 && frac < 1.0) {
        return Err(CliError::new(format!("test fraction {frac} not in (0, 1)")));
    }
    let seed = cfg.resolve(seed, "seed", 42u64);
    let ds = load_dataset(&data_path, 0)?;
    let (train, test) = stratified_split(&ds, frac, seed.wrapping_add(SEED_SPLIT))?;
    write_csv(&train, &out_train)?;
    write_csv(&test, &out_test)?;
    let summary = serde_json::json!({
        "n_train": train.n_samples(),
        "n_test": test.n_samples(),
        "train_histogram": train.class_histogram(),
        "test_histogram": test.class_histogram(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_evaluate(
    cfg: &Config,
    pred: Option<PathBuf>,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let pred_path = cfg.require(pred, "pred")?;
    let data_path = cfg.require(data, "data")?;
    if !pred_path.exists() {
        return Err(CliError::missing(&pred_path));
    }
    let ds = load_dataset(&data_path, 0)?;
    let text = std::fs::read_to_string(&pred_path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let label = line
            .rsplit(',')
            .next()
            .and_then(|c| c.trim().parse::<usize>().ok())
            .ok_or_else(|| CliError::new(format!("bad predictions row {i}")))?;
        labels.push(label);
    }
    let acc = eval::accuracy(&labels, ds.labels())?;
    let n_classes = ds.n_classes();
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in labels.iter().zip(ds.labels()) {
        if p < n_classes {
            confusion[t][p] += 1;
        }
    }
    let summary = serde_json::json!({
        "n": labels.len(),
        "accuracy": acc,
        "confusion": confusion,
    });
    let text = serde_json::to_string_pretty(&summary)?;
    match out.or_else(|| cfg.get("out")) {
        Some(path) => std::fs::write(path, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_baseline_knn(
    cfg: &Config,
    train: Option<PathBuf>,
    test: Option<PathBuf>,
    k: Option<usize>,
    width: Option<usize>,
    runs: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let train_path = cfg.require(train, "train")?;
    let test_path = cfg.require(test, "test")?;
    let k = cfg.resolve(k, "k", 3usize);
    let width = cfg.resolve(width, "truncate", 80usize);
    let seed = cfg.resolve(seed, "seed", 42u64);
    let train = load_dataset(&train_path, width)?;
    let test = load_dataset(&test_path, width)?;
    if train.n_features() != test.n_features() {
        return Err(CliError::new(format!(
            "feature width mismatch: train {} vs test {}",
            train.n_features(),
            test.n_features()
        )));
    }
    let model = baseline_knn::KnnModel::fit(&train, k)?;
    let rows: Vec<&[f64]> = test.rows().collect();
    let preds = model.predict(&rows)?;
    let labels: Vec<usize> = preds.iter().map(|(l, _)| *l).collect();
    let acc = eval::accuracy(&labels, test.labels())?;

    if let Some(out) = out.or_else(|| cfg.get("out")) {
        let mut text = String::from("index,prob_positive,predicted_label\n");
        for (i, (label, fr)) in preds.iter().enumerate() {
            text.push_str(&format!("{},{},{}\n", i, fr[0], label));
        }
        std::fs::write(out, text)?;
    }

    let runs = cfg.resolve(runs, "runs", 1usize);
    let repeated = if runs >= 2 {
        let stats = baseline_knn::knn_repeated_runs(
            &train,
            &rows,
            k,
            runs,
            seed.wrapping_add(SEED_KNN),
            0,
        )?;
        let mean_var = stats.iter().map(|&(_, v)| v).sum::<f64>() / stats.len() as f64;
        Some(serde_json::json!({ "runs": runs, "mean_prob_variance": mean_var }))
    } else {
        None
    };
    let summary = serde_json::json!({
        "k": k,
        "n_train": train.n_samples(),
        "n_test": test.n_samples(),
        "accuracy": acc,
        "repeated": repeated,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
